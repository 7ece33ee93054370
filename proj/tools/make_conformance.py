#!/usr/bin/env python3
"""Write the .oodf conformance corpus with a writer independent of the C++ code.

Each NAME.oodf gets a NAME.json sidecar holding either the expected contents
or the expected error ("error": to_string of the code).
"""

import argparse
import json
import struct
from pathlib import Path

import numpy as np

LABELS, LOGITS, DROPOUT, ODIN = 1, 2, 4, 8


def encode(features, labels=None, logits=None, dropout=None, odin=None, epsilon=0.0, checkpoint="",
           magic=b"OODF", version=1, dtype=0):
    features = np.asarray(features, dtype=np.float32)
    n, d = features.shape
    c = 0
    t = 0
    flags = 0
    body = features.tobytes(order="C")
    if labels is not None:
        flags |= LABELS
        body += np.asarray(labels, dtype="<i4").tobytes()
    if logits is not None:
        logits = np.asarray(logits, dtype=np.float32)
        flags |= LOGITS
        c = logits.shape[1]
        body += logits.tobytes(order="C")
    if dropout is not None:
        dropout = np.asarray(dropout, dtype=np.float32)  # N x T x C
        flags |= DROPOUT
        t, c = dropout.shape[1], dropout.shape[2]
        body += dropout.tobytes(order="C")
    if odin is not None:
        odin = np.asarray(odin, dtype=np.float32)
        flags |= ODIN
        c = odin.shape[1]
        body += odin.tobytes(order="C")
    if flags & (DROPOUT | ODIN):
        cid = checkpoint.encode()
        body += struct.pack("<dI", epsilon, len(cid)) + cid
    header = magic + struct.pack("<HBBQQQQ", version, dtype, flags, n, d, c, t)
    return header + body


def as_list(a):
    return None if a is None else np.asarray(a, dtype=np.float32).astype(np.float64).tolist()


def valid_cases(rng):
    feats = rng.normal(size=(4, 3)).astype(np.float32)
    logits = rng.normal(size=(4, 2)).astype(np.float32)
    probs = rng.dirichlet(np.ones(2), size=(2, 3)).astype(np.float32)
    full_feats = np.maximum(rng.normal(size=(2, 3)), 0).astype(np.float32)
    full_logits = rng.normal(size=(2, 2)).astype(np.float32)
    return {
        "features_only": dict(features=[[1.0, -2.5], [0.25, 3.0], [1e-3, 7.0]]),
        "labels_logits": dict(features=feats, labels=[0, 1, 1, 0], logits=logits),
        "full_channels": dict(features=full_feats, labels=[1, 0], logits=full_logits, dropout=probs,
                              odin=full_logits + np.float32(0.01), epsilon=0.0014, checkpoint="mlp-16"),
        "empty": dict(features=np.zeros((0, 4), dtype=np.float32)),
    }


def sidecar(case):
    feats = np.asarray(case["features"], dtype=np.float32)
    meta = {"N": feats.shape[0], "d": feats.shape[1], "C": 0, "T": 0, "features": as_list(feats)}
    if case.get("labels") is not None:
        meta["labels"] = list(case["labels"])
    if case.get("logits") is not None:
        meta["logits"] = as_list(case["logits"])
        meta["C"] = len(case["logits"][0])
    if case.get("dropout") is not None:
        drop = np.asarray(case["dropout"], dtype=np.float32)
        meta["T"] = drop.shape[1]
        meta["dropout"] = as_list(drop.reshape(drop.shape[0], -1))
    if case.get("odin") is not None:
        meta["odin"] = as_list(case["odin"])
        meta["epsilon"] = case["epsilon"]
        meta["checkpoint"] = case["checkpoint"]
    return meta


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "conformance"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)

    for name, case in valid_cases(rng).items():
        (out / f"{name}.oodf").write_bytes(encode(**case))
        (out / f"{name}.json").write_text(json.dumps(sidecar(case), indent=1) + "\n")

    good = encode([[1.0, 2.0]], logits=[[0.5, -0.5]])
    nan = encode([[1.0, float("nan")]])
    broken = {
        "bad_magic": (encode([[1.0]], magic=b"OODX"), "bad magic"),
        "bad_version": (encode([[1.0]], version=2), "unsupported version"),
        "bad_dtype": (encode([[1.0]], dtype=1), "unsupported dtype"),
        "truncated": (good[:-3], "truncated payload"),
        "trailing": (good + b"\0", "trailing bytes"),
        "non_finite": (nan, "non-finite value"),
    }
    for name, (data, err) in broken.items():
        (out / f"{name}.oodf").write_bytes(data)
        (out / f"{name}.json").write_text(json.dumps({"error": err}) + "\n")


if __name__ == "__main__":
    main()
