// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mfs/data.hpp"
#include "mfs/distill.hpp"
#include "mfs/latency.hpp"
#include "mfs/metrics.hpp"
#include "mfs/network.hpp"
#include "mfs/search.hpp"


using json = nlohmann::ordered_json;
using namespace mfs;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr std::uint64_t kValSeedOffset = 1000003;

// Bad flag combinations and missing inputs the user can fix on the command line.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string out;
  std::string data;
  std::uint64_t seed = 0;
  bool json = false;

  // gen-data
  std::size_t train_count = 200;
  std::size_t val_count = 50;
  std::size_t height = 64;
  std::size_t width = 128;
  int classes = 4;
  std::string cityscapes;

  // bench-latency
  int reps = 5;

  // search
  int iterations = 200;
  double lambda_latency = 0.01;
  double tau = 1.0;
  std::string latency;

  // training
  int epochs = 20;
  double lr = 1e-2;
  double temperature = 4.0;
  double distill_weight = 1.0;
  bool no_attention = false;
  std::optional<int> ignore_class;
  int jobs = 1;
  int seeds = 1;
  bool plain = false;

  // eval / cost-report / export-spec
  std::string pred;
  std::string truth;
  std::string save_pred;
  std::string model = "student";
  double fps_seconds = 1.0;
  std::string role = "student";
  std::string stage = "search";
  std::string file;
};

fs::path out_dir(const Options& o) {
  if (!o.out.empty()) return o.out;
  if (const char* env = std::getenv("MFS_OUT_DIR"); env && *env) return env;
  throw UsageError("no output directory: pass --out or set MFS_OUT_DIR");
}

fs::path data_dir(const Options& o) { return o.data.empty() ? out_dir(o) / "data" : fs::path(o.data); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// NaN and infinities have no JSON spelling; they become null.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json optional_int(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }

void require_file(const fs::path& path, const std::string& hint) {
  if (!fs::exists(path)) throw std::runtime_error("missing " + path.string() + " (" + hint + ")");
}

Dataset load_split(const fs::path& data, const std::string& split) {
  require_file(data / split / "manifest.json", "run gen-data first or pass --data");
  return load_dataset(DatasetManifest::load(data / split));
}

std::optional<Dataset> load_optional_split(const fs::path& data, const std::string& split) {
  if (!fs::exists(data / split / "manifest.json")) return std::nullopt;
  return load_dataset(DatasetManifest::load(data / split));
}

NetworkSpec load_spec(const fs::path& path, const std::string& hint) {
  require_file(path, hint);
  return NetworkSpec::parse(read_text(path));
}

ParameterStore load_store(const fs::path& path, const std::string& hint) {
  require_file(path, hint);
  return ParameterStore::load(path);
}

TrainConfig train_config(const Options& o, std::uint64_t seed) {
  TrainConfig c;
  c.epochs = o.epochs;
  c.lr = o.lr;
  c.seed = seed;
  c.temperature = o.temperature;
  c.distill_weight = o.distill_weight;
  c.ignore_index = o.ignore_class;
  return c;
}

json train_config_json(const TrainConfig& c) {
  json j;
  j["epochs"] = c.epochs;
  j["lr"] = c.lr;
  j["momentum"] = c.momentum;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["temperature"] = c.temperature;
  j["distill_weight"] = c.distill_weight;
  j["grad_clip"] = c.grad_clip;
  j["ignore_index"] = optional_int(c.ignore_index);
  return j;
}

void write_run(const fs::path& out, const std::string& command, const json& resolved) {
  json j;
  j["command"] = command;
  j["version"] = kVersion;
  j["config"] = resolved;
  write_json(out / "run.json", j);
}

// Directory holding the trained weights and spec of a model name.
fs::path model_dir(const fs::path& out, const std::string& model) {
  if (model != "teacher" && model != "student" && model != "plain") {
    throw UsageError("--model must be teacher, student or plain, got '" + model + "'");
  }
  return out / model;
}

void emit(const Options& o, const json& summary, const std::string& text) {
  if (o.json) {
    std::cout << summary.dump(2) << '\n';
  } else {
    std::cout << text;
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

int cmd_gen_data(const Options& o) {
  const fs::path out = out_dir(o);
  const fs::path data = data_dir(o);
  json resolved;
  resolved["data"] = data.string();
  resolved["seed"] = o.seed;
  std::vector<DatasetManifest> made;
  if (!o.cityscapes.empty()) {
    resolved["cityscapes"] = o.cityscapes;
    resolved["height"] = o.height;
    for (const std::string split : {"train", "val"}) {
      if (fs::exists(fs::path(o.cityscapes) / "leftImg8bit" / split)) {
        made.push_back(load_cityscapes_dir(o.cityscapes, split, o.height, data));
      }
    }
    if (made.empty()) throw std::runtime_error("no train or val split under " + o.cityscapes);
  } else {
    resolved["train_count"] = o.train_count;
    resolved["val_count"] = o.val_count;
    resolved["height"] = o.height;
    resolved["width"] = o.width;
    resolved["classes"] = o.classes;
    resolved["val_seed"] = o.seed + kValSeedOffset;
    made.push_back(
        generate_synthetic(data, "train", o.train_count, o.height, o.width, o.classes, o.seed));
    made.push_back(generate_synthetic(data, "val", o.val_count, o.height, o.width, o.classes,
                                      o.seed + kValSeedOffset));
  }
  write_run(out, "gen-data", resolved);
  json summary = json::array();
  std::string text;
  for (const auto& m : made) {
    summary.push_back({{"split", m.split},
                       {"dir", m.dir.string()},
                       {"samples", m.samples.size()},
                       {"height", m.height},
                       {"width", m.width},
                       {"num_classes", m.num_classes}});
    text += m.split + ": " + std::to_string(m.samples.size()) + " samples " +
            std::to_string(m.height) + "x" + std::to_string(m.width) + " in " + m.dir.string() +
            "\n";
  }
  emit(o, summary, text);
  return 0;
}

int cmd_bench_latency(const Options& o) {
  const fs::path out = out_dir(o);
  SearchSpaceConfig cfg;
  const LatencyTable table = benchmark_table(cfg, o.height, o.width, o.reps, o.seed);
  const fs::path path = o.latency.empty() ? out / "latency.csv" : fs::path(o.latency);
  table.save_csv(path);
  json resolved;
  resolved["height"] = o.height;
  resolved["width"] = o.width;
  resolved["reps"] = o.reps;
  resolved["seed"] = o.seed;
  resolved["latency"] = path.string();
  write_run(out, "bench-latency", resolved);
  json summary;
  summary["table"] = path.string();
  summary["entries"] = table.size();
  emit(o, summary,
       "wrote " + std::to_string(table.size()) + " latency entries to " + path.string() + "\n");
  return 0;
}

int cmd_search(const Options& o) {
  const fs::path out = out_dir(o);
  const fs::path data = data_dir(o);
  const fs::path latency = o.latency.empty() ? out / "latency.csv" : fs::path(o.latency);
  require_file(latency, "run bench-latency first or pass --latency");
  const LatencyTable table = LatencyTable::load_csv(latency);
  const DatasetManifest manifest = DatasetManifest::load(data / "train");
  const Dataset train = load_dataset(manifest);

  SearchSpaceConfig cfg;
  cfg.num_classes = manifest.num_classes;
  SearchOptions so;
  so.iterations = o.iterations;
  so.seed = o.seed;
  so.lambda_latency = o.lambda_latency;
  so.tau = o.tau;
  SearchResult r = search(cfg, train, table, so);
  r.teacher.attention = !o.no_attention;
  r.student.attention = !o.no_attention;

  const fs::path dir = out / "search";
  write_text(dir / "teacher.json", r.teacher.dump() + "\n");
  write_text(dir / "student.json", r.student.dump() + "\n");
  r.weights.save(dir / "supernet.bin");
  r.arch.logits().save(dir / "arch.bin");
  table.save_csv(dir / "latency.csv");
  std::string csv = "iteration,weight_loss,arch_loss,latency_ms\n";
  for (const auto& s : r.history) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", s.iteration, s.weight_loss,
                  s.arch_loss, s.latency_ms);
    csv += buf;
  }
  write_text(dir / "history.csv", csv);

  json resolved;
  resolved["data"] = data.string();
  resolved["latency"] = latency.string();
  resolved["iterations"] = so.iterations;
  resolved["seed"] = so.seed;
  resolved["lambda_latency"] = so.lambda_latency;
  resolved["tau"] = so.tau;
  resolved["weight_lr"] = so.weight_lr;
  resolved["arch_lr"] = so.arch_lr;
  resolved["batch_size"] = so.batch_size;
  resolved["grad_clip"] = so.grad_clip;
  resolved["head_attention"] = so.head_attention;
  resolved["attention"] = !o.no_attention;
  resolved["search_space"] = cfg.to_json();
  write_run(out, "search", resolved);

  json summary;
  summary["fingerprint"] = r.student.fingerprint;
  summary["teacher_latency_ms"] = regularized_latency(table, r.teacher);
  summary["student_latency_ms"] = regularized_latency(table, r.student);
  summary["final_weight_loss"] = r.history.empty() ? json(nullptr) : number(r.history.back().weight_loss);
  emit(o, summary,
       "search done: fingerprint " + r.student.fingerprint + ", student latency " +
           fmt(summary["student_latency_ms"].get<double>()) + " ms, artifacts in " +
           dir.string() + "\n");
  return 0;
}

json report_summary(const TrainReport& r) {
  const auto& last = r.epochs.back();
  json j;
  j["epochs"] = r.epochs.size();
  j["final_seg_loss"] = number(last.seg_loss);
  j["final_distill_loss"] = number(last.distill_loss);
  j["final_val_miou"] = number(last.val_miou);
  return j;
}

int cmd_train_teacher(const Options& o) {
  const fs::path out = out_dir(o);
  const fs::path data = data_dir(o);
  NetworkSpec spec = load_spec(out / "search" / "teacher.json", "run search first");
  spec.attention = spec.attention && !o.no_attention;
  ParameterStore weights = load_store(out / "search" / "supernet.bin", "run search first");
  const Dataset train = load_split(data, "train");
  const auto val = load_optional_split(data, "val");
  const TrainConfig c = train_config(o, o.seed);
  const TrainReport r = train_teacher(spec, weights, train, val ? &*val : nullptr, c);

  const fs::path dir = out / "teacher";
  write_text(dir / "spec.json", spec.dump() + "\n");
  weights.save(dir / "weights.bin");
  write_text(dir / "train.csv", r.to_csv());
  json resolved = train_config_json(c);
  resolved["data"] = data.string();
  resolved["attention"] = spec.attention;
  write_run(out, "train-teacher", resolved);
  const json summary = report_summary(r);
  emit(o, summary,
       "teacher trained: val mIoU " + fmt(r.epochs.back().val_miou) + ", artifacts in " +
           dir.string() + "\n");
  return 0;
}

int cmd_distill(const Options& o) {
  const fs::path out = out_dir(o);
  const fs::path data = data_dir(o);
  NetworkSpec student = load_spec(out / "search" / "student.json", "run search first");
  student.attention = student.attention && !o.no_attention;
  // A distilled student starts from the trained teacher's copy of the shared
  // weights; a plain student starts from the search.
  std::optional<NetworkSpec> teacher;
  std::optional<ParameterStore> teacher_weights;
  if (!o.plain) {
    teacher = load_spec(out / "teacher" / "spec.json", "run train-teacher first");
    teacher_weights = load_store(out / "teacher" / "weights.bin", "run train-teacher first");
  }
  const ParameterStore shared =
      o.plain ? load_store(out / "search" / "supernet.bin", "run search first") : *teacher_weights;
  const Dataset train = load_split(data, "train");
  const auto val = load_optional_split(data, "val");

  const fs::path dir = out / (o.plain ? "plain" : "student");
  std::vector<TrainReport> reports(static_cast<std::size_t>(o.seeds));
  std::vector<std::exception_ptr> errors(reports.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < reports.size(); k = next++) {
      try {
        const std::uint64_t seed = o.seed + k;
        ParameterStore w = shared;
        const TrainConfig c = train_config(o, seed);
        reports[k] = o.plain ? train_student(student, w, train, val ? &*val : nullptr, c)
                             : distill_student(student, w, *teacher, *teacher_weights, train,
                                               val ? &*val : nullptr, c);
        const fs::path seed_dir = k == 0 ? dir : dir / ("seed_" + std::to_string(seed));
        write_text(seed_dir / "spec.json", student.dump() + "\n");
        w.save(seed_dir / "weights.bin");
        write_text(seed_dir / "train.csv", reports[k].to_csv());
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, std::min(o.jobs, o.seeds));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  json resolved = train_config_json(train_config(o, o.seed));
  resolved["data"] = data.string();
  resolved["attention"] = student.attention;
  resolved["plain"] = o.plain;
  resolved["seeds"] = o.seeds;
  resolved["jobs"] = o.jobs;
  write_run(out, o.plain ? "distill --plain" : "distill", resolved);

  json summary = json::array();
  std::string text;
  for (std::size_t k = 0; k < reports.size(); ++k) {
    json s = report_summary(reports[k]);
    s["seed"] = o.seed + k;
    summary.push_back(s);
    text += std::string(o.plain ? "plain" : "distilled") + " student seed " +
            std::to_string(o.seed + k) + ": val mIoU " + fmt(reports[k].epochs.back().val_miou) +
            "\n";
  }
  if (o.seeds > 1) write_json(dir / "summary.json", summary);
  emit(o, summary, text);
  return 0;
}

struct LabelMap {
  std::vector<int> labels;
  std::size_t width = 0;
  std::size_t height = 0;
};

LabelMap read_label_map(const fs::path& path) {
  const Image8 img = read_pnm(path);
  if (img.channels != 1) throw std::runtime_error(path.string() + ": expected a PGM label map");
  return {std::vector<int>(img.pixels.begin(), img.pixels.end()), img.width, img.height};
}

std::vector<std::string> pgm_names(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") {
      names.push_back(e.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::string metrics_text(const ConfusionMatrix& cm) {
  return "PA " + fmt(cm.pixel_accuracy()) + "\nmPA " + fmt(cm.mean_pixel_accuracy()) + "\nmIoU " +
         fmt(cm.mean_iou()) + "\n";
}

int eval_label_dirs(const Options& o, const fs::path& out) {
  if (o.pred.empty() || o.truth.empty()) throw UsageError("--pred and --truth go together");
  const auto truth_names = pgm_names(o.truth);
  const auto pred_names = pgm_names(o.pred);
  if (truth_names.empty()) throw std::runtime_error("no .pgm label maps in " + o.truth);
  if (truth_names != pred_names) {
    std::string msg = "prediction and truth directories hold different files:";
    for (const auto& n : truth_names)
      if (!std::binary_search(pred_names.begin(), pred_names.end(), n)) msg += " missing " + n;
    for (const auto& n : pred_names)
      if (!std::binary_search(truth_names.begin(), truth_names.end(), n)) msg += " extra " + n;
    throw std::runtime_error(msg);
  }
  std::vector<std::pair<LabelMap, LabelMap>> maps;
  int max_label = 0;
  for (const auto& name : truth_names) {
    LabelMap t = read_label_map(fs::path(o.truth) / name);
    LabelMap p = read_label_map(fs::path(o.pred) / name);
    if (t.width != p.width || t.height != p.height) {
      throw std::runtime_error("size mismatch: " + (fs::path(o.truth) / name).string() + " vs " +
                               (fs::path(o.pred) / name).string());
    }
    for (int v : t.labels) max_label = std::max(max_label, v);
    for (int v : p.labels) max_label = std::max(max_label, v);
    maps.emplace_back(std::move(t), std::move(p));
  }
  const int k = o.classes > 0 && o.classes > max_label ? o.classes : max_label + 1;
  ConfusionMatrix cm(k, o.ignore_class);
  for (const auto& [t, p] : maps) cm.accumulate(t.labels, p.labels, t.width);

  json resolved;
  resolved["pred"] = o.pred;
  resolved["truth"] = o.truth;
  resolved["num_classes"] = k;
  resolved["ignore_index"] = optional_int(o.ignore_class);
  write_run(out, "eval", resolved);
  const json summary = cm.report();
  write_json(out / "eval" / "labels.json", summary);
  emit(o, summary, metrics_text(cm));
  return 0;
}

int cmd_eval(const Options& o) {
  const fs::path out = out_dir(o);
  if (!o.pred.empty() || !o.truth.empty()) return eval_label_dirs(o, out);

  const fs::path data = data_dir(o);
  const fs::path dir = model_dir(out, o.model);
  const NetworkSpec spec = load_spec(dir / "spec.json", "train the model first");
  ParameterStore weights = load_store(dir / "weights.bin", "train the model first");
  const DatasetManifest manifest = DatasetManifest::load(data / "val");
  const Dataset val = load_dataset(manifest);
  const std::optional<int> ignore = o.ignore_class ? o.ignore_class : val.ignore_index;

  ConfusionMatrix cm(val.num_classes, ignore);
  for (std::size_t i = 0; i < val.size(); ++i) {
    const std::size_t idx[] = {i};
    const Batch b = make_batch(val, idx);
    const std::vector<int> pred = predict(spec, weights, b.images);
    cm.accumulate(b.labels, pred, val.samples[i].width);
    if (!o.save_pred.empty()) {
      Image8 img{val.samples[i].width, val.samples[i].height, 1,
                 std::vector<std::uint8_t>(pred.begin(), pred.end())};
      write_pnm(fs::path(o.save_pred) / fs::path(manifest.samples[i].second).filename(), img);
    }
  }

  json summary;
  summary["model"] = o.model;
  summary["metrics"] = cm.report();
  summary["flops"] = network_flops(spec, manifest.height, manifest.width);
  summary["parameters"] = network_params(spec);
  summary["attention"] = spec.attention;
  write_json(out / "eval" / (o.model + ".json"), summary);

  json resolved;
  resolved["data"] = data.string();
  resolved["model"] = o.model;
  resolved["ignore_index"] = optional_int(ignore);
  resolved["save_pred"] = o.save_pred;
  write_run(out, "eval", resolved);
  emit(o, summary, o.model + " on " + std::to_string(val.size()) + " val images\n" +
                       metrics_text(cm));
  return 0;
}

int cmd_cost_report(const Options& o) {
  const fs::path out = out_dir(o);
  const fs::path dir = model_dir(out, o.model);
  const NetworkSpec spec = load_spec(dir / "spec.json", "train the model first");
  ParameterStore weights = load_store(dir / "weights.bin", "train the model first");
  std::size_t h = o.height, w = o.width;
  const fs::path manifest = data_dir(o) / "val" / "manifest.json";
  if (fs::exists(manifest)) {
    const DatasetManifest m = DatasetManifest::load(manifest.parent_path());
    h = m.height;
    w = m.width;
  }
  // Default table: the run's own benchmark, else the one the search used.
  fs::path latency = o.latency.empty() ? out / "latency.csv" : fs::path(o.latency);
  if (o.latency.empty() && !fs::exists(latency)) latency = out / "search" / "latency.csv";
  CostReport r;
  r.flops = network_flops(spec, h, w);
  r.parameters = network_params(spec);
  const FpsResult fps = measure_fps(spec, weights, h, w, o.fps_seconds);
  r.fps = fps.fps;
  r.fps_bound = fps.bound;
  r.regularized_latency_ms = fs::exists(latency)
                                 ? regularized_latency(LatencyTable::load_csv(latency), spec)
                                 : std::numeric_limits<double>::quiet_NaN();
  json summary = r.to_json();
  summary["model"] = o.model;
  summary["height"] = h;
  summary["width"] = w;
  if (!std::isfinite(r.regularized_latency_ms)) summary["regularized_latency_ms"] = nullptr;
  write_json(out / "cost" / (o.model + ".json"), summary);

  json resolved;
  resolved["model"] = o.model;
  resolved["height"] = h;
  resolved["width"] = w;
  resolved["fps_seconds"] = o.fps_seconds;
  resolved["latency"] = fs::exists(latency) ? json(latency.string()) : json(nullptr);
  write_run(out, "cost-report", resolved);
  emit(o, summary, r.to_text());
  return 0;
}

int cmd_export_spec(const Options& o) {
  const fs::path out = out_dir(o);
  if (o.role != "teacher" && o.role != "student") {
    throw UsageError("--role must be teacher or student, got '" + o.role + "'");
  }
  fs::path path;
  if (o.stage == "search") {
    path = out / "search" / (o.role + ".json");
  } else if (o.stage == "trained") {
    path = out / o.role / "spec.json";
  } else {
    throw UsageError("--stage must be search or trained, got '" + o.stage + "'");
  }
  const NetworkSpec spec = load_spec(path, "run the producing stage first");
  const std::string text = spec.dump() + "\n";
  if (!o.file.empty()) write_text(o.file, text);
  json resolved;
  resolved["role"] = o.role;
  resolved["stage"] = o.stage;
  resolved["file"] = o.file;
  write_run(out, "export-spec", resolved);
  if (o.file.empty() || o.json) {
    std::cout << text;
  } else {
    std::cout << "wrote " << o.file << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Latency-aware segmentation search, distillation and evaluation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  auto common = [&](CLI::App* sub) {
    sub->add_option("--out", o.out, "Run directory (falls back to MFS_OUT_DIR)");
    sub->add_option("--seed", o.seed, "Random seed")->capture_default_str();
    sub->add_flag("--json", o.json, "Print the result summary as JSON");
  };
  auto with_data = [&](CLI::App* sub) {
    sub->add_option("--data", o.data, "Dataset root with train/ and val/ (default <out>/data)");
  };
  auto with_training = [&](CLI::App* sub) {
    sub->add_option("--epochs", o.epochs, "Training epochs")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--lr", o.lr, "Learning rate")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    sub->add_flag("--no-attention", o.no_attention, "Drop the adaptive attention head");
    sub->add_option("--ignore-class", o.ignore_class, "Class id left out of loss and metrics");
  };

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset or ingest Cityscapes");
  common(gen);
  with_data(gen);
  gen->add_option("--train-count", o.train_count, "Training images")->capture_default_str();
  gen->add_option("--val-count", o.val_count, "Validation images")->capture_default_str();
  gen->add_option("--height", o.height, "Image height")->capture_default_str();
  gen->add_option("--width", o.width, "Image width")->capture_default_str();
  gen->add_option("--classes", o.classes, "Number of classes")
      ->check(CLI::Range(2, 255))
      ->capture_default_str();
  gen->add_option("--cityscapes", o.cityscapes,
                  "Cityscapes root (leftImg8bit/, gtFine/) to ingest at --height")
      ->check(CLI::ExistingDirectory);

  auto* bench = app.add_subcommand("bench-latency", "Measure the per-operator latency table");
  common(bench);
  bench->add_option("--height", o.height, "Input height")->capture_default_str();
  bench->add_option("--width", o.width, "Input width")->capture_default_str();
  bench->add_option("--reps", o.reps, "Timed repetitions per entry")
      ->check(CLI::Range(3, 1000))
      ->capture_default_str();
  bench->add_option("--latency", o.latency, "Output CSV (default <out>/latency.csv)");

  auto* srch = app.add_subcommand("search", "Run the latency-regularized supernet search");
  common(srch);
  with_data(srch);
  srch->add_option("--iterations", o.iterations, "Search iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  srch->add_option("--lambda-latency", o.lambda_latency, "Latency loss weight")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  srch->add_option("--tau", o.tau, "Gumbel-softmax temperature")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  srch->add_option("--latency", o.latency, "Latency CSV (default <out>/latency.csv)");
  srch->add_flag("--no-attention", o.no_attention, "Export specs without the attention head");

  auto* teach = app.add_subcommand("train-teacher", "Train the searched teacher network");
  common(teach);
  with_data(teach);
  with_training(teach);

  auto* dist = app.add_subcommand("distill", "Train the student against the frozen teacher");
  common(dist);
  with_data(dist);
  with_training(dist);
  dist->add_option("--temperature", o.temperature, "Distillation temperature")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  dist->add_option("--distill-weight", o.distill_weight, "Weight of the distillation loss")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  dist->add_option("--seeds", o.seeds, "Train seeds seed..seed+N-1")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  dist->add_option("--jobs", o.jobs, "Parallel training runs across seeds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  dist->add_flag("--plain", o.plain, "Train the student without a teacher into <out>/plain");

  auto* ev = app.add_subcommand("eval", "Score a trained model or a directory of predictions");
  common(ev);
  with_data(ev);
  ev->add_option("--model", o.model, "teacher, student or plain")->capture_default_str();
  ev->add_option("--pred", o.pred, "Directory of predicted .pgm label maps");
  ev->add_option("--truth", o.truth, "Directory of ground-truth .pgm label maps");
  ev->add_option("--classes", o.classes, "Class count for --pred/--truth (default: max label + 1)");
  ev->add_option("--ignore-class", o.ignore_class, "Class id left out of the metrics");
  ev->add_option("--save-pred", o.save_pred, "Write predicted label maps here");

  auto* cost = app.add_subcommand("cost-report", "FLOPs, parameters, FPS and latency of a model");
  common(cost);
  with_data(cost);
  cost->add_option("--model", o.model, "teacher, student or plain")->capture_default_str();
  cost->add_option("--height", o.height, "Input height without a dataset")->capture_default_str();
  cost->add_option("--width", o.width, "Input width without a dataset")->capture_default_str();
  cost->add_option("--fps-seconds", o.fps_seconds, "FPS measurement duration")
      ->check(CLI::Range(1.0, 600.0))
      ->capture_default_str();
  cost->add_option("--latency", o.latency, "Latency CSV (default <out>/latency.csv)");

  auto* exp = app.add_subcommand("export-spec", "Print or save a network spec as JSON");
  common(exp);
  exp->add_option("--role", o.role, "teacher or student")->capture_default_str();
  exp->add_option("--stage", o.stage, "search or trained")->capture_default_str();
  exp->add_option("--file", o.file, "Write the network spec here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "mfs: usage error: " << e.what() << "\n";
    return 2;
  }
  // eval infers the class count unless --classes is given.
  if (ev->parsed() && ev->count("--classes") == 0) o.classes = 0;

  try {
    if (gen->parsed()) return cmd_gen_data(o);
    if (bench->parsed()) return cmd_bench_latency(o);
    if (srch->parsed()) return cmd_search(o);
    if (teach->parsed()) return cmd_train_teacher(o);
    if (dist->parsed()) return cmd_distill(o);
    if (ev->parsed()) return cmd_eval(o);
    if (cost->parsed()) return cmd_cost_report(o);
    if (exp->parsed()) return cmd_export_spec(o);
  } catch (const UsageError& e) {
    std::cerr << "mfs: usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "mfs: error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
