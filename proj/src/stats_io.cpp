#include "oodkit/stats_io.hpp"

#include <map>

#include "binary.hpp"
#include "oodkit/dump_io.hpp"

namespace oodkit {

namespace {

constexpr std::array<char, 4> kStatsMagic{'O', 'O', 'D', 'S'};

struct Tensor {
  std::uint8_t kind = 0;
  std::vector<std::uint64_t> dims;
  std::vector<double> f64;
  std::vector<std::uint64_t> u64;
};

using Section = std::map<std::string, Tensor>;

class SectionWriter {
 public:
  SectionWriter& matrix(const std::string& name, const Eigen::Ref<const Matrix>& m) {
    begin(name, 0, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())});
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) w_.f64(m(i, j));
    }
    return *this;
  }
  SectionWriter& vector(const std::string& name, const Vector& v) {
    begin(name, 0, {static_cast<std::uint64_t>(v.size())});
    for (Eigen::Index i = 0; i < v.size(); ++i) w_.f64(v(i));
    return *this;
  }
  SectionWriter& scalars(const std::string& name, const std::vector<double>& v) {
    begin(name, 0, {v.size()});
    for (double x : v) w_.f64(x);
    return *this;
  }
  SectionWriter& scalar(const std::string& name, double v) { return scalars(name, {v}); }
  SectionWriter& counts(const std::string& name, const std::vector<std::uint64_t>& v) {
    begin(name, 1, {v.size()});
    for (auto x : v) w_.u64(x);
    return *this;
  }
  SectionWriter& stack(const std::string& name, const std::vector<Matrix>& ms, std::uint64_t d) {
    begin(name, 0, {ms.size(), d, d});
    for (const auto& m : ms) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) w_.f64(m(i, j));
      }
    }
    return *this;
  }

  void emit(binary::Writer& out, const std::string& tag) {
    out.str(tag);
    auto body = w_.take();
    binary::Writer payload;
    payload.u32(entries_);
    payload.bytes(body.data(), body.size());
    auto bytes = payload.take();
    out.u64(bytes.size());
    out.bytes(bytes.data(), bytes.size());
  }

 private:
  void begin(const std::string& name, std::uint8_t kind, std::vector<std::uint64_t> dims) {
    w_.str(name);
    w_.u8(kind);
    w_.u8(static_cast<std::uint8_t>(dims.size()));
    for (auto x : dims) w_.u64(x);
    ++entries_;
  }

  binary::Writer w_;
  std::uint32_t entries_ = 0;
};

std::vector<double> bools(const std::vector<bool>& v) { return {v.begin(), v.end()}; }

Section parse_section(std::span<const std::uint8_t> bytes) {
  binary::Reader r(bytes);
  Section out;
  const std::uint32_t count = r.u32();
  for (std::uint32_t e = 0; e < count; ++e) {
    std::string name = r.str();
    Tensor t;
    t.kind = r.u8();
    if (t.kind > 1) throw Error(ErrorCode::kUnsupportedDtype, "unknown tensor kind in stats bundle");
    const std::uint8_t rank = r.u8();
    std::uint64_t total = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      t.dims.push_back(r.u64());
      total = binary::checked_mul(total, t.dims.back());
    }
    r.require(static_cast<std::size_t>(binary::checked_mul(total, 8)));
    if (t.kind == 0) {
      t.f64.resize(static_cast<std::size_t>(total));
      for (auto& x : t.f64) x = r.f64();
    } else {
      t.u64.resize(static_cast<std::size_t>(total));
      for (auto& x : t.u64) x = r.u64();
    }
    out.emplace(std::move(name), std::move(t));
  }
  if (r.remaining() != 0) throw Error(ErrorCode::kTrailingBytes, "trailing bytes in stats section");
  return out;
}

const Tensor& entry(const Section& s, const std::string& name, std::uint8_t kind) {
  auto it = s.find(name);
  if (it == s.end() || it->second.kind != kind) {
    throw Error(ErrorCode::kMissingArtifact, "stats bundle entry '" + name + "' missing");
  }
  return it->second;
}

Matrix get_matrix(const Section& s, const std::string& name) {
  const auto& t = entry(s, name, 0);
  if (t.dims.size() != 2) throw Error(ErrorCode::kDimensionMismatch, name + ": expected a matrix");
  Matrix m(static_cast<Eigen::Index>(t.dims[0]), static_cast<Eigen::Index>(t.dims[1]));
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = t.f64[k++];
  }
  return m;
}

RowMatrix get_rows(const Section& s, const std::string& name) { return get_matrix(s, name); }

Vector get_vector(const Section& s, const std::string& name) {
  const auto& t = entry(s, name, 0);
  if (t.dims.size() != 1) throw Error(ErrorCode::kDimensionMismatch, name + ": expected a vector");
  return Eigen::Map<const Vector>(t.f64.data(), static_cast<Eigen::Index>(t.f64.size()));
}

std::vector<double> get_scalars(const Section& s, const std::string& name) {
  return entry(s, name, 0).f64;
}

double get_scalar(const Section& s, const std::string& name) {
  const auto& v = entry(s, name, 0).f64;
  if (v.size() != 1) throw Error(ErrorCode::kDimensionMismatch, name + ": expected a scalar");
  return v[0];
}

std::vector<std::uint64_t> get_counts(const Section& s, const std::string& name) {
  return entry(s, name, 1).u64;
}

std::vector<bool> get_bools(const Section& s, const std::string& name) {
  const auto v = get_scalars(s, name);
  std::vector<bool> out;
  for (double x : v) out.push_back(x != 0.0);
  return out;
}

void expect_shape(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kDimensionMismatch, "stats bundle: inconsistent shape for " + what);
}

}  // namespace

std::vector<std::uint8_t> encode_stats(const FittedStats& s) {
  binary::Writer w;
  w.bytes(kStatsMagic.data(), kStatsMagic.size());
  w.u16(kStatsVersion);
  w.u16(0);
  w.u64(s.feature_dim);
  w.u64(s.num_classes);

  std::vector<std::pair<std::string, SectionWriter>> sections;
  auto add = [&](const std::string& tag) -> SectionWriter& {
    sections.emplace_back(tag, SectionWriter{});
    return sections.back().second;
  };
  if (s.class_means) add("class_means").matrix("means", *s.class_means);
  if (s.shared_cov_inv) add("shared_cov_inv").matrix("inv", *s.shared_cov_inv);
  if (s.class_cov_inv) add("class_cov_inv").stack("inv", *s.class_cov_inv, s.feature_dim);
  if (s.background_mean && s.background_cov_inv) {
    add("background").vector("mean", *s.background_mean).matrix("cov_inv", *s.background_cov_inv);
  }
  if (s.train_mean) add("train_mean").vector("mean", *s.train_mean);
  if (s.subspace) {
    add("subspace")
        .vector("mean", s.subspace->train_mean)
        .matrix("basis", s.subspace->basis)
        .vector("eigenvalues", s.subspace->eigenvalues);
  }
  if (s.vim_alpha) add("vim_alpha").scalar("alpha", *s.vim_alpha);
  if (s.knn) {
    add("knn").matrix("points", s.knn->points).counts("config", {s.knn->seed, s.knn->cap});
  }
  if (s.prototypes) {
    add("prototypes").matrix("dists", s.prototypes->dists).scalars("fallback", bools(s.prototypes->uniform_fallback));
  }
  if (s.temperature) add("temperature").scalar("T", *s.temperature);
  if (s.react_threshold) {
    auto& sec = add("react").scalar("threshold", *s.react_threshold);
    if (s.react_percentile) sec.scalar("percentile", *s.react_percentile);
  }
  if (s.dice) {
    add("dice").matrix("mask", s.dice->mask).scalar("sparsity", s.dice->sparsity).scalar("degenerate", s.dice->degenerate);
  }
  if (s.she) {
    add("she").matrix("patterns", s.she->patterns).scalars("fallback", bools(s.she->class_mean_fallback));
  }
  if (s.openmax) {
    std::vector<double> shape, scale, valid, shrunk;
    std::vector<std::uint64_t> samples;
    for (const auto& t : s.openmax->tails) {
      shape.push_back(t.params.shape);
      scale.push_back(t.params.scale);
      valid.push_back(t.valid);
      shrunk.push_back(t.shrunk);
      samples.push_back(t.samples);
    }
    add("openmax")
        .matrix("mavs", s.openmax->mavs)
        .scalars("shape", shape)
        .scalars("scale", scale)
        .scalars("valid", valid)
        .scalars("shrunk", shrunk)
        .counts("samples", samples)
        .counts("config", {s.openmax->tail_size, s.openmax->alpha_top});
  }
  if (!s.thresholds.empty()) {
    auto& sec = add("thresholds");
    for (const auto& [name, t] : s.thresholds) {
      sec.scalars(name, {t.value, t.target_tpr, t.positive == PositiveClass::kOod ? 1.0 : 0.0});
    }
  }

  w.u32(static_cast<std::uint32_t>(sections.size()));
  for (auto& [tag, sec] : sections) sec.emit(w, tag);
  return w.take();
}

FittedStats decode_stats(std::span<const std::uint8_t> bytes) {
  binary::Reader r(bytes);
  std::array<char, 4> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kStatsMagic) throw Error(ErrorCode::kBadMagic, "bad magic");
  const std::uint16_t version = r.u16();
  if (version != kStatsVersion) {
    throw Error(ErrorCode::kUnsupportedVersion, "stats bundle version mismatch: " + std::to_string(version));
  }
  r.u16();
  FittedStats s;
  s.feature_dim = static_cast<std::size_t>(r.u64());
  s.num_classes = static_cast<std::size_t>(r.u64());
  const auto d = static_cast<Eigen::Index>(s.feature_dim);
  const auto c = static_cast<Eigen::Index>(s.num_classes);

  std::map<std::string, Section> sections;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string tag = r.str();
    const std::uint64_t len = r.u64();
    r.require(static_cast<std::size_t>(len));
    std::vector<std::uint8_t> payload(static_cast<std::size_t>(len));
    r.bytes(payload.data(), payload.size());
    sections.emplace(std::move(tag), parse_section(payload));
  }
  if (r.remaining() != 0) throw Error(ErrorCode::kTrailingBytes, "trailing bytes after stats bundle");

  auto has = [&](const char* tag) { return sections.count(tag) != 0; };
  auto sec = [&](const char* tag) -> const Section& { return sections.at(tag); };

  if (has("class_means")) {
    s.class_means = get_rows(sec("class_means"), "means");
    expect_shape(s.class_means->rows() == c && s.class_means->cols() == d, "class means");
  }
  if (has("shared_cov_inv")) {
    s.shared_cov_inv = get_matrix(sec("shared_cov_inv"), "inv");
    expect_shape(s.shared_cov_inv->rows() == d && s.shared_cov_inv->cols() == d, "shared covariance");
  }
  if (has("class_cov_inv")) {
    const auto& t = entry(sec("class_cov_inv"), "inv", 0);
    expect_shape(t.dims.size() == 3 && t.dims[1] == s.feature_dim && t.dims[2] == s.feature_dim,
                 "class covariances");
    std::vector<Matrix> covs;
    std::size_t k = 0;
    for (std::uint64_t cls = 0; cls < t.dims[0]; ++cls) {
      Matrix m(d, d);
      for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) m(i, j) = t.f64[k++];
      }
      covs.push_back(std::move(m));
    }
    s.class_cov_inv = std::move(covs);
  }
  if (has("background")) {
    s.background_mean = get_vector(sec("background"), "mean");
    s.background_cov_inv = get_matrix(sec("background"), "cov_inv");
    expect_shape(s.background_mean->size() == d && s.background_cov_inv->rows() == d, "background");
  }
  if (has("train_mean")) {
    s.train_mean = get_vector(sec("train_mean"), "mean");
    expect_shape(s.train_mean->size() == d, "training mean");
  }
  if (has("subspace")) {
    PrincipalSubspace sub;
    sub.train_mean = get_vector(sec("subspace"), "mean");
    sub.basis = get_matrix(sec("subspace"), "basis");
    sub.eigenvalues = get_vector(sec("subspace"), "eigenvalues");
    expect_shape(sub.train_mean.size() == d && sub.basis.rows() == d &&
                     sub.eigenvalues.size() == sub.basis.cols(),
                 "subspace");
    s.subspace = std::move(sub);
  }
  if (has("vim_alpha")) s.vim_alpha = get_scalar(sec("vim_alpha"), "alpha");
  if (has("knn")) {
    KnnIndex index;
    index.points = get_rows(sec("knn"), "points");
    const auto cfg = get_counts(sec("knn"), "config");
    expect_shape(cfg.size() == 2 && index.points.cols() == d, "knn index");
    index.seed = cfg[0];
    index.cap = static_cast<std::size_t>(cfg[1]);
    s.knn = std::move(index);
  }
  if (has("prototypes")) {
    Prototypes p;
    p.dists = get_rows(sec("prototypes"), "dists");
    p.uniform_fallback = get_bools(sec("prototypes"), "fallback");
    expect_shape(p.dists.rows() == p.dists.cols() &&
                     p.uniform_fallback.size() == static_cast<std::size_t>(p.dists.rows()),
                 "prototypes");
    s.prototypes = std::move(p);
  }
  if (has("temperature")) s.temperature = get_scalar(sec("temperature"), "T");
  if (has("react")) {
    s.react_threshold = get_scalar(sec("react"), "threshold");
    if (sec("react").count("percentile")) s.react_percentile = get_scalar(sec("react"), "percentile");
  }
  if (has("dice")) {
    DiceMask m;
    m.mask = get_rows(sec("dice"), "mask");
    m.sparsity = get_scalar(sec("dice"), "sparsity");
    m.degenerate = get_scalar(sec("dice"), "degenerate") != 0.0;
    expect_shape(m.mask.rows() == c && m.mask.cols() == d, "DICE mask");
    s.dice = std::move(m);
  }
  if (has("she")) {
    ShePatterns p;
    p.patterns = get_rows(sec("she"), "patterns");
    p.class_mean_fallback = get_bools(sec("she"), "fallback");
    expect_shape(p.patterns.cols() == d &&
                     p.class_mean_fallback.size() == static_cast<std::size_t>(p.patterns.rows()),
                 "SHE patterns");
    s.she = std::move(p);
  }
  if (has("openmax")) {
    const auto& o = sec("openmax");
    OpenMaxModel m;
    m.mavs = get_rows(o, "mavs");
    const auto shape = get_scalars(o, "shape");
    const auto scale = get_scalars(o, "scale");
    const auto valid = get_bools(o, "valid");
    const auto shrunk = get_bools(o, "shrunk");
    const auto samples = get_counts(o, "samples");
    const auto cfg = get_counts(o, "config");
    const auto classes = static_cast<std::size_t>(m.mavs.rows());
    expect_shape(shape.size() == classes && scale.size() == classes && valid.size() == classes &&
                     shrunk.size() == classes && samples.size() == classes && cfg.size() == 2,
                 "OpenMax tails");
    for (std::size_t k = 0; k < classes; ++k) {
      WeibullTail t;
      t.params = {shape[k], scale[k]};
      t.valid = valid[k];
      t.shrunk = shrunk[k];
      t.samples = static_cast<std::size_t>(samples[k]);
      m.tails.push_back(t);
    }
    m.tail_size = static_cast<std::size_t>(cfg[0]);
    m.alpha_top = static_cast<std::size_t>(cfg[1]);
    s.openmax = std::move(m);
  }
  if (has("thresholds")) {
    for (const auto& [name, t] : sec("thresholds")) {
      expect_shape(t.kind == 0 && t.f64.size() == 3, "threshold " + name);
      Threshold th;
      th.value = t.f64[0];
      th.target_tpr = t.f64[1];
      th.positive = t.f64[2] != 0.0 ? PositiveClass::kOod : PositiveClass::kId;
      th.method = name;
      s.thresholds.emplace(name, th);
    }
  }
  return s;
}

void save_stats(const FittedStats& stats, const std::filesystem::path& path) {
  write_file_bytes(path, encode_stats(stats));
}

FittedStats load_stats(const std::filesystem::path& path, std::optional<std::size_t> expected_dim) {
  FittedStats s = decode_stats(read_file_bytes(path));
  if (expected_dim) s.check_feature_dim(*expected_dim);
  return s;
}

}  // namespace oodkit
