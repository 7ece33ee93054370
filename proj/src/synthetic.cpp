#include "oodkit/synthetic.hpp"

#include <cmath>
#include <random>

#include "oodkit/dump_io.hpp"

namespace oodkit {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Geometry {
  Matrix frame;                // d x d orthonormal columns
  Vector noise_std;            // per frame direction
  RowMatrix means;             // C x d, pre-ReLU class means
  RowMatrix inward;            // C x d, unit vectors from each class mean towards their centroid
  Vector near_dir, far_dir;
};

Geometry make_geometry(const SyntheticSpec& spec, std::size_t backbone, std::mt19937_64& rng) {
  const auto d = static_cast<Eigen::Index>(spec.dim);
  const auto c = static_cast<Eigen::Index>(spec.classes);
  std::normal_distribution<double> normal;
  Matrix a(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) a(i, j) = normal(rng);
  }
  a.col(0).setOnes();  // first frame direction is the offset direction
  Eigen::HouseholderQR<Matrix> qr(a);
  Geometry g;
  g.frame = qr.householderQ() * Matrix::Identity(d, d);

  g.noise_std = Vector::Constant(d, spec.nuisance_scale);
  g.noise_std(0) = 1.0;
  for (Eigen::Index k = 0; k < c; ++k) g.noise_std(1 + k) = 1.0;
  g.noise_std(d - 2) = 1.0;
  g.noise_std(d - 1) = 1.0;

  // Later backbones get slightly less separated classes, hence lower accuracy.
  const double spread = spec.class_spread * (1.0 - 0.15 * static_cast<double>(backbone));
  g.means.resize(c, d);
  for (Eigen::Index k = 0; k < c; ++k) {
    g.means.row(k) = (Vector::Constant(d, spec.offset) + spread * g.frame.col(1 + k)).transpose();
  }
  const Vector centroid = g.means.colwise().mean().transpose();
  g.inward.resize(c, d);
  for (Eigen::Index k = 0; k < c; ++k) g.inward.row(k) = (centroid - g.means.row(k).transpose()).normalized().transpose();
  g.near_dir = g.frame.col(d - 2);
  g.far_dir = g.frame.col(d - 1);
  return g;
}

LinearHead make_head(const Geometry& g) {
  LinearHead h;
  h.weights = g.means;
  h.bias.resize(g.means.rows());
  for (Eigen::Index k = 0; k < g.means.rows(); ++k) h.bias(k) = -0.5 * g.means.row(k).squaredNorm();
  return h;
}

enum class Shift { kNone, kNear, kFarBp, kFarGeneral };

/// Pre-ReLU sample of class y, shifted and with optional heavy-tailed noise.
FeatureSet sample(const SyntheticSpec& spec, const Geometry& g, const LinearHead& head, std::size_t n,
                  Shift shift, bool labels, std::mt19937_64& rng) {
  const auto d = static_cast<Eigen::Index>(spec.dim);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<std::int32_t> pick(0, static_cast<std::int32_t>(spec.classes) - 1);
  const bool heavy = shift == Shift::kFarGeneral && spec.heavy_tail_df > 0.0;
  std::chi_squared_distribution<double> chi(heavy ? spec.heavy_tail_df : 1.0);
  // Student-t rescaled to unit variance (needs df > 2; otherwise left unscaled).
  const double t_scale =
      heavy && spec.heavy_tail_df > 2.0 ? std::sqrt((spec.heavy_tail_df - 2.0) / spec.heavy_tail_df) : 1.0;

  FeatureSet fs;
  fs.num_classes = spec.classes;
  fs.features.resize(static_cast<Eigen::Index>(n), d);
  std::vector<std::int32_t> y(n);
  Vector eps(d);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = pick(rng);
    for (Eigen::Index j = 0; j < d; ++j) eps(j) = normal(rng) * g.noise_std(j);
    if (heavy) eps *= t_scale / std::sqrt(chi(rng) / spec.heavy_tail_df);
    Vector z = g.means.row(y[i]).transpose() + g.frame * eps;
    const Vector inward = g.inward.row(y[i]).transpose();
    switch (shift) {
      case Shift::kNone:
        break;
      case Shift::kNear:
        z += spec.near_shift * (g.near_dir + 0.5 * inward).normalized();
        break;
      case Shift::kFarBp:
        z += spec.far_shift * (g.far_dir + 0.5 * inward).normalized();
        break;
      case Shift::kFarGeneral:
        z += spec.far_shift * ((g.far_dir + g.near_dir) / std::sqrt(2.0) + 0.5 * inward).normalized();
        break;
    }
    fs.features.row(static_cast<Eigen::Index>(i)) = z.cwiseMax(0.0).transpose();
  }
  fs.logits = head.batch_logits(fs.features);
  if (labels) fs.labels = std::move(y);
  return fs;
}

AugmentedDump augment(const SyntheticSpec& spec, const FeatureSet& fs, const LinearHead& head,
                      const std::string& checkpoint, std::mt19937_64& rng) {
  const auto n = static_cast<Eigen::Index>(fs.size());
  const auto c = static_cast<Eigen::Index>(spec.classes);
  const auto t = static_cast<Eigen::Index>(spec.dropout_passes);
  std::bernoulli_distribution keep(1.0 - spec.dropout_rate);
  const double rescale = 1.0 / (1.0 - spec.dropout_rate);

  AugmentedDump aug;
  aug.source_checkpoint = checkpoint;
  aug.dropout_samples = spec.dropout_passes;
  aug.odin_epsilon = spec.odin_epsilon;
  RowMatrix stacks(n, t * c);
  RowMatrix odin(n, c);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector z = fs.features.row(i).transpose();
    for (Eigen::Index p = 0; p < t; ++p) {
      Vector dropped = z;
      for (Eigen::Index j = 0; j < z.size(); ++j) dropped(j) = keep(rng) ? z(j) * rescale : 0.0;
      stacks.row(i).segment(p * c, c) = softmax(head.logits(dropped)).probs.transpose();
    }
    // Move the input along the sign of the gradient of log max-softmax.
    const Vector f = head.logits(z);
    const Vector probs = softmax(f, spec.odin_temperature).probs;
    const auto top = static_cast<Eigen::Index>(argmax(f));
    const Vector grad =
        (head.weights.row(top).transpose() - head.weights.transpose() * probs) / spec.odin_temperature;
    const Vector perturbed = z + spec.odin_epsilon * grad.unaryExpr([](double v) {
      return static_cast<double>((v > 0.0) - (v < 0.0));
    });
    odin.row(i) = head.logits(perturbed).transpose();
  }
  aug.dropout_prob_stacks = std::move(stacks);
  aug.odin_logits = std::move(odin);
  return aug;
}

}  // namespace

SyntheticRun generate_synthetic_run(const SyntheticSpec& spec, std::size_t backbone, std::size_t seed) {
  if (spec.classes < 2 || spec.dim < spec.classes + 3) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic benchmark needs classes >= 2 and dim >= classes + 3");
  }
  if (spec.dropout_rate < 0.0 || spec.dropout_rate >= 1.0 || spec.dropout_passes == 0) {
    throw Error(ErrorCode::kInvalidArgument, "dropout rate must be in [0, 1) with at least one pass");
  }
  if (backbone >= spec.backbones.size()) throw Error(ErrorCode::kInvalidArgument, "backbone index out of range");

  // Geometry depends on the backbone and seed (one trained checkpoint each);
  // every split draws from its own stream so sizes do not couple the data.
  const std::uint64_t base = mix(mix(spec.seed) ^ (backbone * 0x100000001b3ULL + seed));
  std::mt19937_64 geo_rng(mix(base + 1));
  const Geometry g = make_geometry(spec, backbone, geo_rng);
  const std::string checkpoint = "synthetic:" + spec.backbones[backbone] + ":s" + std::to_string(seed);

  SyntheticRun run;
  run.head = make_head(g);
  auto stream = [&](std::uint64_t k) { return std::mt19937_64(mix(base + 100 + k)); };
  {
    auto rng = stream(0);
    run.train = sample(spec, g, run.head, spec.n_train, Shift::kNone, true, rng);
  }
  auto dataset = [&](std::uint64_t k, std::size_t n, Shift shift, bool labels) {
    auto rng = stream(k);
    SyntheticDataset ds;
    ds.features = sample(spec, g, run.head, n, shift, labels, rng);
    auto aug_rng = stream(k + 50);
    ds.augmented = augment(spec, ds.features, run.head, checkpoint, aug_rng);
    return ds;
  };
  run.val = dataset(1, spec.n_val, Shift::kNone, true);
  run.test = dataset(2, spec.n_test, Shift::kNone, true);
  run.ood.emplace_back("near", dataset(3, spec.n_ood, Shift::kNear, false));
  run.ood.emplace_back("far_bp", dataset(4, spec.n_ood, Shift::kFarBp, false));
  run.ood.emplace_back("far_general", dataset(5, spec.n_ood, Shift::kFarGeneral, false));
  return run;
}

BenchmarkManifest gen_synthetic_benchmark(const SyntheticSpec& spec, const fs::path& out_dir) {
  if (spec.backbones.empty() || spec.seeds == 0) {
    throw Error(ErrorCode::kInvalidArgument, "need at least one backbone and one seed");
  }
  fs::create_directories(out_dir);
  const fs::path root = fs::absolute(out_dir).lexically_normal();

  BenchmarkManifest m;
  m.backbones = spec.backbones;
  for (std::size_t s = 0; s < spec.seeds; ++s) m.seeds.push_back("s" + std::to_string(s));
  for (std::size_t c = 0; c < spec.classes; ++c) m.class_names.push_back("class_" + std::to_string(c));

  for (std::size_t b = 0; b < spec.backbones.size(); ++b) {
    std::vector<RunPaths> row;
    for (std::size_t s = 0; s < spec.seeds; ++s) {
      const SyntheticRun run = generate_synthetic_run(spec, b, s);
      const fs::path dir = root / spec.backbones[b] / m.seeds[s];
      fs::create_directories(dir / "ood");
      RunPaths paths;
      paths.id_train = dir / "train.oodf";
      paths.id_val = dir / "val.oodf";
      paths.id_test = dir / "test.oodf";
      paths.head = dir / "head.oodh";
      write_dump(run.train, nullptr, paths.id_train);
      write_dump(run.val.features, &run.val.augmented, paths.id_val);
      write_dump(run.test.features, &run.test.augmented, paths.id_test);
      write_head(run.head, paths.head);
      for (const auto& [name, ds] : run.ood) {
        const fs::path p = dir / "ood" / (name + ".oodf");
        write_dump(ds.features, &ds.augmented, p);
        paths.ood_groups.push_back({name, {p}});
      }
      row.push_back(std::move(paths));
    }
    m.runs.push_back(std::move(row));
  }
  save_manifest(m, root / "manifest.json");
  return m;
}

}  // namespace oodkit
