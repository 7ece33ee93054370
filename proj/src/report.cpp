#include "oodkit/report.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "oodkit/error.hpp"
#include "oodkit/methods.hpp"

namespace oodkit {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  std::string s(buf);
  if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::size_t display_width(const std::string& s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char ch) { return (static_cast<unsigned char>(ch) & 0xC0) != 0x80; }));
}

std::string pad_right(const std::string& s, std::size_t width) {
  const std::size_t w = display_width(s);
  return w >= width ? s : s + std::string(width - w, ' ');
}

std::string pad_left(const std::string& s, std::size_t width) {
  const std::size_t w = display_width(s);
  return w >= width ? s : std::string(width - w, ' ') + s;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

template <typename T>
std::size_t index_of(const std::vector<T>& v, const T& x) {
  return static_cast<std::size_t>(std::find(v.begin(), v.end(), x) - v.begin());
}

std::string group_title(const std::string& g) {
  if (g == "near") return "Near-OoD";
  if (g == "far_bp") return "Far-OoD(Bubbles & Particles)";
  if (g == "far_general") return "Far-OoD(General)";
  return g;
}

bool in_benchmark(const std::string& group, const std::string& benchmark) {
  return group.rfind(benchmark, 0) == 0;
}

std::string display_name(const std::string& id) {
  try {
    return std::string(method_display(parse_method(id)));
  } catch (const Error&) {
    return id;
  }
}

std::optional<Family> family_of(const std::string& id) {
  try {
    return method_family(parse_method(id));
  } catch (const Error&) {
    return std::nullopt;
  }
}

constexpr std::size_t kMethodWidth = 14;
constexpr std::size_t kMetricWidth = 12;
constexpr std::size_t kCell = 16;
constexpr std::array<const char*, 5> kMetricHeads{"FPR95-ID↓", "FPR95-OoD↓", "FPR99-ID↓", "FPR99-OoD↓", "AUROC↑"};

void benchmark_table(std::ostringstream& os, const EvalReport& r, const std::string& benchmark,
                     const std::string& title) {
  std::vector<std::string> groups;
  for (const auto& g : r.groups) {
    if (in_benchmark(g, benchmark)) groups.push_back(g);
  }
  if (groups.empty()) return;

  const std::size_t block = kMetricWidth * kMetricHeads.size();
  os << title << "\n";
  os << "Values in percent; mean over seeds on each method's best network.\n\n";
  std::string line1 = pad_right("", kMethodWidth);
  std::string line2 = pad_right("Method", kMethodWidth);
  for (const auto& g : groups) {
    line1 += "  " + pad_right(group_title(g), block);
    line2 += "  ";
    for (const char* h : kMetricHeads) line2 += pad_left(h, kMetricWidth);
  }
  line1 += "  ";
  line2 += "  Network";
  while (!line1.empty() && line1.back() == ' ') line1.pop_back();
  os << line1 << "\n" << line2 << "\n";
  const std::string rule(display_width(line2), '-');
  os << rule << "\n";

  for (Family fam : {Family::kDistance, Family::kClassification, Family::kDensity}) {
    std::vector<std::string> members;
    for (const auto& m : r.methods) {
      if (family_of(m) == fam) members.push_back(m);
    }
    if (members.empty()) continue;
    os << family_display(fam) << "\n";
    for (const auto& m : members) {
      const BestBackbone* best = r.best_for(m, benchmark);
      std::string line = pad_right(display_name(m), kMethodWidth);
      for (const auto& g : groups) {
        line += "  ";
        const AggregateRow* agg = best && best->backbone ? r.aggregate(m, *best->backbone, g) : nullptr;
        if (agg && agg->summary) {
          const auto& s = *agg->summary;
          for (double v : {s.fpr95_id.mean, s.fpr95_ood.mean, s.fpr99_id.mean, s.fpr99_ood.mean, s.auroc.mean}) {
            line += pad_left(fixed(v, 2), kMetricWidth);
          }
        } else {
          for (std::size_t k = 0; k < kMetricHeads.size(); ++k) line += pad_left("-", kMetricWidth);
        }
      }
      line += "  " + (best && best->backbone ? *best->backbone : std::string("-"));
      os << line << "\n";
    }
  }
  os << rule << "\n\n";
}

void network_table(std::ostringstream& os, const EvalReport& r) {
  if (r.methods.empty() || r.backbones.empty() || r.groups.empty()) return;
  os << "AUROC by network\n";
  os << "Values in percent; mean ± std over seeds.\n\n";
  std::string head = pad_right("Method", kMethodWidth) + "  " + pad_right("Group", kMethodWidth);
  for (const auto& b : r.backbones) head += "  " + pad_left(b, kCell);
  os << head << "\n" << std::string(display_width(head), '-') << "\n";
  for (const auto& m : r.methods) {
    for (const auto& g : r.groups) {
      std::string line = pad_right(display_name(m), kMethodWidth) + "  " + pad_right(g, kMethodWidth);
      for (const auto& b : r.backbones) {
        const AggregateRow* agg = r.aggregate(m, b, g);
        std::string cell = "-";
        if (agg && agg->summary) {
          cell = fixed(agg->summary->auroc.mean, 2) + " ± " + fixed(agg->summary->auroc.std, 2);
        }
        line += "  " + pad_left(cell, kCell);
      }
      os << line << "\n";
    }
  }
  os << "\n";
}

void accuracy_table(std::ostringstream& os, const EvalReport& r) {
  std::vector<std::pair<std::string, std::vector<double>>> per_backbone;
  for (const auto& b : r.backbones) {
    std::vector<double> acc;
    for (const auto& s : r.seeds) {
      for (const auto& row : r.rows) {
        if (row.backbone == b && row.seed == s && row.ok() && row.metrics->acc) {
          acc.push_back(*row.metrics->acc);
          break;
        }
      }
    }
    if (!acc.empty()) per_backbone.emplace_back(b, std::move(acc));
  }
  if (per_backbone.empty()) return;
  os << "Classifier accuracy\n";
  os << "ID test ACC in percent; mean ± std over seeds.\n\n";
  const std::string head = pad_right("Network", kMethodWidth) + "  " + pad_left("ACC", kCell) + "  Seeds";
  os << head << "\n" << std::string(display_width(head), '-') << "\n";
  for (const auto& [b, acc] : per_backbone) {
    const MeanStd ms = mean_std(acc);
    os << pad_right(b, kMethodWidth) << "  " << pad_left(fixed(ms.mean, 2) + " ± " + fixed(ms.std, 2), kCell) << "  "
       << acc.size() << "\n";
  }
  os << "\n";
}

json metrics_json(const MetricRow& m) {
  json j;
  j["fpr95_id"] = m.fpr95_id;
  j["fpr95_ood"] = m.fpr95_ood;
  j["fpr99_id"] = m.fpr99_id;
  j["fpr99_ood"] = m.fpr99_ood;
  j["auroc"] = m.auroc;
  j["acc"] = m.acc ? json(*m.acc) : json(nullptr);
  j["n_id"] = m.n_id;
  j["n_ood"] = m.n_ood;
  return j;
}

MetricRow metrics_from_json(const json& j) {
  MetricRow m;
  m.fpr95_id = j.at("fpr95_id").get<double>();
  m.fpr95_ood = j.at("fpr95_ood").get<double>();
  m.fpr99_id = j.at("fpr99_id").get<double>();
  m.fpr99_ood = j.at("fpr99_ood").get<double>();
  m.auroc = j.at("auroc").get<double>();
  if (!j.at("acc").is_null()) m.acc = j.at("acc").get<double>();
  m.n_id = j.at("n_id").get<std::size_t>();
  m.n_ood = j.at("n_ood").get<std::size_t>();
  return m;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

}  // namespace

bool EvalReport::any_failure() const {
  return !failures.empty() || std::any_of(rows.begin(), rows.end(), [](const CellRow& r) { return !r.ok(); });
}

const AggregateRow* EvalReport::aggregate(const std::string& method, const std::string& backbone,
                                          const std::string& group) const {
  for (const auto& a : aggregates) {
    if (a.method == method && a.backbone == backbone && a.group == group) return &a;
  }
  return nullptr;
}

const BestBackbone* EvalReport::best_for(const std::string& method, const std::string& benchmark) const {
  for (const auto& b : best) {
    if (b.method == method && b.benchmark == benchmark) return &b;
  }
  return nullptr;
}

void finalize_report(EvalReport& r) {
  auto key = [&](const CellRow& c) {
    return std::tuple(index_of(r.methods, c.method), index_of(r.backbones, c.backbone), index_of(r.seeds, c.seed),
                      index_of(r.groups, c.group));
  };
  std::stable_sort(r.rows.begin(), r.rows.end(), [&](const CellRow& a, const CellRow& b) { return key(a) < key(b); });

  r.aggregates.clear();
  for (const auto& m : r.methods) {
    for (const auto& b : r.backbones) {
      for (const auto& g : r.groups) {
        AggregateRow agg{m, b, g, std::nullopt, r.seeds.size(), {}};
        std::vector<MetricRow> runs;
        for (const auto& s : r.seeds) {
          auto it = std::find_if(r.rows.begin(), r.rows.end(), [&](const CellRow& c) {
            return c.method == m && c.backbone == b && c.seed == s && c.group == g && c.ok();
          });
          if (it == r.rows.end()) {
            agg.missing_seeds.push_back(s);
          } else {
            runs.push_back(*it->metrics);
          }
        }
        if (agg.missing_seeds.empty() && !runs.empty()) agg.summary = summarize(runs);
        r.aggregates.push_back(std::move(agg));
      }
    }
  }

  r.best.clear();
  for (const auto& m : r.methods) {
    for (const std::string benchmark : {"far", "near"}) {
      std::vector<std::string> groups;
      for (const auto& g : r.groups) {
        if (in_benchmark(g, benchmark)) groups.push_back(g);
      }
      if (groups.empty()) continue;
      BestBackbone best{m, benchmark, std::nullopt, 0.0};
      for (const auto& b : r.backbones) {
        double sum = 0.0;
        bool complete = true;
        for (const auto& g : groups) {
          const AggregateRow* agg = r.aggregate(m, b, g);
          if (!agg || !agg->summary) {
            complete = false;
            break;
          }
          sum += agg->summary->auroc.mean;
        }
        if (!complete) continue;
        const double mean = sum / static_cast<double>(groups.size());
        if (!best.backbone || mean > best.mean_auroc) {
          best.backbone = b;
          best.mean_auroc = mean;
        }
      }
      r.best.push_back(std::move(best));
    }
  }
}

std::string results_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "method,backbone,seed,ood_group,fpr95_id,fpr95_ood,fpr99_id,fpr99_ood,auroc,acc,n_id,n_ood,config,status\n";
  for (const auto& row : r.rows) {
    os << csv_field(row.method) << ',' << csv_field(row.backbone) << ',' << csv_field(row.seed) << ','
       << csv_field(row.group) << ',';
    if (row.metrics) {
      const auto& m = *row.metrics;
      os << fixed(m.fpr95_id, 6) << ',' << fixed(m.fpr95_ood, 6) << ',' << fixed(m.fpr99_id, 6) << ','
         << fixed(m.fpr99_ood, 6) << ',' << fixed(m.auroc, 6) << ',' << (m.acc ? fixed(*m.acc, 6) : "") << ','
         << m.n_id << ',' << m.n_ood;
    } else {
      os << ",,,,,,,";
    }
    os << ',' << csv_field(row.config) << ',' << csv_field(row.status) << '\n';
  }
  return os.str();
}

std::string sweeps_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "method,backbone,seed,config,val_auroc,selected,status\n";
  for (const auto& s : r.sweeps) {
    os << csv_field(s.method) << ',' << csv_field(s.backbone) << ',' << csv_field(s.seed) << ','
       << csv_field(s.config) << ',' << (s.val_auroc ? fixed(*s.val_auroc, 6) : "") << ',' << (s.selected ? 1 : 0)
       << ',' << csv_field(s.status) << '\n';
  }
  return os.str();
}

std::string text_report(const EvalReport& r) {
  std::ostringstream os;
  benchmark_table(os, r, "far", "Far-OoD benchmarks");
  benchmark_table(os, r, "near", "Near-OoD benchmark");
  network_table(os, r);
  accuracy_table(os, r);
  std::vector<std::string> problems = r.failures;
  for (const auto& row : r.rows) {
    if (!row.ok()) problems.push_back(row.method + " " + row.backbone + " " + row.seed + " " + row.group + ": " + row.status);
  }
  for (const auto& a : r.aggregates) {
    if (!a.missing_seeds.empty() && a.missing_seeds.size() < a.expected) {
      std::string seeds;
      for (const auto& s : a.missing_seeds) seeds += (seeds.empty() ? "" : " ") + s;
      problems.push_back(a.method + " " + a.backbone + " " + a.group + ": not aggregated, missing seeds " + seeds);
    }
  }
  if (!problems.empty()) {
    os << "Failures\n";
    for (const auto& p : problems) os << "  " << p << "\n";
  }
  return os.str();
}

std::string report_to_json(const EvalReport& r) {
  json root;
  root["methods"] = r.methods;
  root["backbones"] = r.backbones;
  root["seeds"] = r.seeds;
  root["groups"] = r.groups;
  json rows = json::array();
  for (const auto& row : r.rows) {
    json j;
    j["method"] = row.method;
    j["backbone"] = row.backbone;
    j["seed"] = row.seed;
    j["group"] = row.group;
    j["metrics"] = row.metrics ? metrics_json(*row.metrics) : json(nullptr);
    j["config"] = row.config;
    j["status"] = row.status;
    rows.push_back(std::move(j));
  }
  root["rows"] = std::move(rows);
  json sweeps = json::array();
  for (const auto& s : r.sweeps) {
    json j;
    j["method"] = s.method;
    j["backbone"] = s.backbone;
    j["seed"] = s.seed;
    j["config"] = s.config;
    j["val_auroc"] = s.val_auroc ? json(*s.val_auroc) : json(nullptr);
    j["status"] = s.status;
    j["selected"] = s.selected;
    sweeps.push_back(std::move(j));
  }
  root["sweeps"] = std::move(sweeps);
  root["failures"] = r.failures;
  return root.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  EvalReport r;
  try {
    const json root = json::parse(text);
    r.methods = root.at("methods").get<std::vector<std::string>>();
    r.backbones = root.at("backbones").get<std::vector<std::string>>();
    r.seeds = root.at("seeds").get<std::vector<std::string>>();
    r.groups = root.at("groups").get<std::vector<std::string>>();
    for (const auto& j : root.at("rows")) {
      CellRow row;
      row.method = j.at("method").get<std::string>();
      row.backbone = j.at("backbone").get<std::string>();
      row.seed = j.at("seed").get<std::string>();
      row.group = j.at("group").get<std::string>();
      if (!j.at("metrics").is_null()) row.metrics = metrics_from_json(j.at("metrics"));
      row.config = j.at("config").get<std::string>();
      row.status = j.at("status").get<std::string>();
      r.rows.push_back(std::move(row));
    }
    for (const auto& j : root.at("sweeps")) {
      SweepRow s;
      s.method = j.at("method").get<std::string>();
      s.backbone = j.at("backbone").get<std::string>();
      s.seed = j.at("seed").get<std::string>();
      s.config = j.at("config").get<std::string>();
      if (!j.at("val_auroc").is_null()) s.val_auroc = j.at("val_auroc").get<double>();
      s.status = j.at("status").get<std::string>();
      s.selected = j.at("selected").get<bool>();
      r.sweeps.push_back(std::move(s));
    }
    r.failures = root.at("failures").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed report: ") + e.what());
  }
  finalize_report(r);
  return r;
}

void emit_report(const EvalReport& r, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_text(out_dir / "results.csv", results_csv(r));
  write_text(out_dir / "sweeps.csv", sweeps_csv(r));
  write_text(out_dir / "report.txt", text_report(r));
  write_text(out_dir / "report.json", report_to_json(r));
}

}  // namespace oodkit
