// treegraph command line: synth | preprocess | augment-preview | train |
// eval | sweep-k. Every run writes a run_manifest.json snapshot sufficient
// to replay it; artifacts land in a temp directory that is renamed into
// place only on success.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "treegraph/augment.hpp"
#include "treegraph/dataset.hpp"
#include "treegraph/metrics.hpp"
#include "treegraph/model.hpp"
#include "treegraph/sampling.hpp"
#include "treegraph/svg.hpp"
#include "treegraph/synth.hpp"
#include "treegraph/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string git_describe() {
  FILE* pipe = popen("git describe --always --dirty 2>/dev/null", "r");
  if (!pipe) return "unknown";
  char buf[256];
  std::string out;
  while (fgets(buf, sizeof(buf), pipe)) out += buf;
  pclose(pipe);
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
  return out.empty() ? "unknown" : out;
}

// Artifacts are staged under <target>.tmp and renamed over on success.
class StagedDir {
 public:
  StagedDir(fs::path target, bool force) : target_(std::move(target)), force_(force) {
    tmp_ = target_;
    tmp_ += ".tmp";
    std::error_code ec;
    fs::remove_all(tmp_, ec);
    fs::create_directories(tmp_);
  }

  const fs::path& path() const { return tmp_; }

  void publish() {
    if (fs::exists(target_)) {
      if (!force_)
        throw tg::IoError("output directory exists: " + target_.string() +
                          " (use --force to overwrite)");
      fs::remove_all(target_);
    }
    fs::rename(tmp_, target_);
  }

 private:
  fs::path target_, tmp_;
  bool force_;
};

void write_run_manifest(const fs::path& dir, const std::string& command, const json& config,
                        std::uint64_t seed, const std::string& started) {
  json m;
  m["command"] = command;
  m["config"] = config;
  m["seed"] = seed;
  m["git_describe"] = git_describe();
  m["started_at"] = started;
  m["finished_at"] = now_iso8601();
  std::ofstream os(dir / "run_manifest.json");
  os << m.dump(2) << '\n';
}

void write_classes(const fs::path& path, const std::vector<std::string>& names) {
  std::ofstream os(path);
  for (const auto& n : names) os << n << '\n';
}

std::vector<std::string> read_classes(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw tg::IoError("cannot open class list: " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (!line.empty()) names.push_back(line);
  }
  if (names.empty()) throw tg::ParseError("empty class list: " + path.string());
  return names;
}

tg::CloudDataset load_split(const fs::path& tgpc, const std::vector<std::string>& classes) {
  tg::CloudDataset ds;
  ds.samples = tg::tgpc::load(tgpc);
  ds.class_names = classes;
  return ds;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  int n_per_class = 20;
  std::size_t points = 1024;
  double train_frac = 0.8;
  std::uint64_t seed = 0;
  bool force = false;
};

int cmd_synth(const SynthArgs& a) {
  const std::string started = now_iso8601();
  StagedDir out(a.out, a.force);
  fs::create_directories(out.path() / "clouds");

  tg::DatasetManifest manifest;
  const auto& names = tg::synth_class_names();
  const int n_train = std::max(1, static_cast<int>(a.train_frac * a.n_per_class));
  for (int cls = 0; cls < static_cast<int>(names.size()); ++cls) {
    for (int i = 0; i < a.n_per_class; ++i) {
      const std::uint64_t s = tg::splitmix64(
          a.seed ^ (static_cast<std::uint64_t>(cls) << 32 | static_cast<std::uint64_t>(i)));
      auto cloud = tg::synth_cloud(cls, a.points, s);
      char rel[64];
      std::snprintf(rel, sizeof(rel), "clouds/%s_%03d.xyz", names[cls].c_str(), i);
      tg::save_xyz_ascii(cloud.points, out.path() / rel);
      manifest.entries.push_back(
          {rel, names[cls], i < n_train ? tg::Split::train : tg::Split::test});
    }
  }
  tg::finalize_manifest(manifest);
  tg::save_manifest(manifest, out.path() / "manifest.csv");

  write_run_manifest(out.path(), "synth",
                     json{{"out", a.out},
                          {"n_per_class", a.n_per_class},
                          {"points", a.points},
                          {"train_frac", a.train_frac}},
                     a.seed, started);
  out.publish();
  std::cout << "synth: wrote " << names.size() * static_cast<std::size_t>(a.n_per_class)
            << " clouds across " << names.size() << " classes to " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct PreprocessArgs {
  std::string manifest;
  std::string out;
  std::size_t points = 1024;
  std::size_t voxel_target = 30000;
  std::size_t voxel_tol = 500;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

int cmd_preprocess(const PreprocessArgs& a) {
  const std::string started = now_iso8601();
  const auto manifest = tg::load_manifest(a.manifest);
  tg::SamplingConfig cfg;
  cfg.target_points = a.points;
  cfg.voxel_target = a.voxel_target;
  cfg.voxel_tolerance = a.voxel_tol;
  cfg.validate();

  struct Slot {
    std::optional<tg::PointCloudSample> sample;
    std::string error;
  };
  std::vector<Slot> slots(manifest.entries.size());
  std::atomic<std::size_t> next{0};
  const int workers = std::max(1, std::min<int>(tg::thread_count(),
                                                static_cast<int>(manifest.entries.size())));
  const auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= manifest.entries.size()) return;
      const auto& e = manifest.entries[i];
      try {
        auto cloud = tg::load_cloud(manifest.base_dir / e.path, tg::CloudFormat::xyz_ascii);
        cloud.label = manifest.label_of(e.class_name);
        tg::SamplingConfig c2 = cfg;
        if (a.seed) c2.seed = tg::splitmix64(*a.seed ^ i);
        slots[i].sample = tg::preprocess_cloud(cloud, c2);
      } catch (const std::exception& ex) {
        slots[i].error = ex.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  std::vector<tg::PointCloudSample> train, test;
  std::size_t failures = 0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i].sample) {
      ++failures;
      std::cerr << "preprocess: skipping " << manifest.entries[i].path << ": "
                << slots[i].error << '\n';
      continue;
    }
    (manifest.entries[i].split == tg::Split::train ? train : test)
        .push_back(std::move(*slots[i].sample));
  }
  if (failures * 10 > manifest.entries.size())
    throw tg::Error("preprocess: " + std::to_string(failures) + " of " +
                    std::to_string(manifest.entries.size()) + " files failed (>10%)");
  if (train.empty()) throw tg::Error("preprocess: no train samples survived");

  StagedDir out(a.out, a.force);
  tg::tgpc::save(train, out.path() / "train.tgpc");
  if (!test.empty()) tg::tgpc::save(test, out.path() / "test.tgpc");
  write_classes(out.path() / "classes.txt", manifest.class_names);
  write_run_manifest(out.path(), "preprocess",
                     json{{"manifest", a.manifest},
                          {"out", a.out},
                          {"points", a.points},
                          {"voxel_target", a.voxel_target},
                          {"voxel_tol", a.voxel_tol},
                          {"failures", failures}},
                     a.seed.value_or(0), started);
  out.publish();
  std::cout << "preprocess: " << train.size() << " train / " << test.size()
            << " test samples at " << a.points << " points -> " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct AugPreviewArgs {
  std::string in;
  std::string out;
  tg::AugmentConfig aug;
  bool force = false;
};

int cmd_augment_preview(const AugPreviewArgs& a) {
  const std::string started = now_iso8601();
  auto cloud = tg::load_cloud(a.in, tg::CloudFormat::xyz_ascii);
  const int n = static_cast<int>(cloud.points.count());
  std::vector<float> v(static_cast<std::size_t>(3) * n);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < n; ++i)
      v[static_cast<std::size_t>(c) * n + i] = cloud.points.at(static_cast<std::size_t>(i), c);
  auto batch = tg::Tensor::from_data({1, 3, n}, std::move(v));
  auto after = tg::augment_batch(batch, a.aug);

  StagedDir out(a.out, a.force);
  tg::save_xyz_ascii(cloud.points, out.path() / "before.xyz");
  tg::PointMatrix after_pts(static_cast<std::size_t>(n));
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < n; ++i)
      after_pts.at(static_cast<std::size_t>(i), c) =
          after.data()[static_cast<std::size_t>(c) * n + i];
  tg::save_xyz_ascii(after_pts, out.path() / "after.xyz");
  write_run_manifest(out.path(), "augment-preview",
                     json{{"in", a.in},
                          {"sigma_j", a.aug.sigma_j},
                          {"rotate", a.aug.rotate},
                          {"delete", a.aug.delete_points},
                          {"scale_min", a.aug.s_min},
                          {"scale_max", a.aug.s_max}},
                     a.aug.seed, started);
  out.publish();
  std::cout << "augment-preview: wrote before/after xyz to " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  tg::ModelConfig model;
  tg::TrainConfig train;
  bool svg = false;
  bool force = false;
  bool no_class_weights = false;
};

json model_config_json(const tg::ModelConfig& m) {
  return json{{"variant", tg::variant_name(m.variant)},
              {"k1", m.scales.k_local},
              {"k2", m.scales.k_branch},
              {"k3", m.scales.k_canopy},
              {"backbone_k", m.backbone_k},
              {"fusion_width", m.fusion_width},
              {"embedding_dim", m.embedding_dim},
              {"num_classes", m.num_classes},
              {"dropout", m.dropout},
              {"leaky_slope", m.leaky_slope}};
}

json train_config_json(const tg::TrainConfig& t) {
  return json{{"batch_size", t.batch_size}, {"lr", t.lr},
              {"weight_decay", t.weight_decay}, {"epochs", t.epochs},
              {"eta_min", t.eta_min}, {"augment", t.augment},
              {"use_class_weights", t.use_class_weights}};
}

int cmd_train(TrainArgs a) {
  const std::string started = now_iso8601();
  const fs::path data(a.data);
  const auto classes = read_classes(data / "classes.txt");
  auto train_ds = load_split(data / "train.tgpc", classes);
  tg::CloudDataset test_ds;
  test_ds.class_names = classes;
  if (fs::exists(data / "test.tgpc")) test_ds = load_split(data / "test.tgpc", classes);

  a.model.num_classes = static_cast<int>(classes.size());
  a.model.init_seed = a.train.seed + 1;
  a.model.scales.validate_hierarchy();
  a.train.use_class_weights = !a.no_class_weights;
  a.train.aug.seed = a.train.seed;

  tg::Model<float> model(a.model);
  std::cout << "train: " << tg::variant_name(a.model.variant) << " with "
            << model.parameter_count() << " parameters ("
            << train_ds.size() << " train / " << test_ds.size() << " test samples)\n";

  StagedDir out(a.out, a.force);
  auto result = tg::train(model, train_ds, test_ds, a.train, out.path(),
                          tg::EpochCallback<float>([](int epoch, tg::Model<float>&,
                                                      const tg::EpochStats& s) {
                            std::printf("epoch %3d  lr %.6g  loss %.5f  test OA %.2f%%  (%.2fs)\n",
                                        epoch, s.lr, s.train_loss, s.test_oa, s.epoch_time_s);
                            std::fflush(stdout);
                            return true;
                          }));
  write_classes(out.path() / "classes.txt", classes);
  if (a.svg) {
    std::vector<double> loss, oa;
    for (const auto& e : result.history) {
      loss.push_back(e.train_loss);
      oa.push_back(e.test_oa);
    }
    tg::write_line_chart_svg((out.path() / "curves.svg").string(), "training curves",
                             {{"train_loss", loss}, {"test_oa", oa}});
  }
  json cfg;
  cfg["data"] = a.data;
  cfg["out"] = a.out;
  cfg["model"] = model_config_json(a.model);
  cfg["train"] = train_config_json(a.train);
  write_run_manifest(out.path(), "train", cfg, a.train.seed, started);
  out.publish();
  std::cout << "train: best test OA " << result.best_oa << "% at epoch " << result.best_epoch
            << "; artifacts in " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string model_cfg;
  std::string data;
  std::string classes;
  std::string out;
  int batch = 16;
  bool force = false;
};

int cmd_eval(const EvalArgs& a) {
  const std::string started = now_iso8601();
  std::ifstream cfg_is(a.model_cfg);
  if (!cfg_is) throw tg::IoError("cannot open model config: " + a.model_cfg);
  std::stringstream buf;
  buf << cfg_is.rdbuf();
  auto cfg = tg::config_from_kv(buf.str());
  const auto classes = read_classes(a.classes);
  if (static_cast<int>(classes.size()) != cfg.num_classes)
    throw tg::ConfigError("class list size does not match model num_classes");
  auto ds = load_split(a.data, classes);

  tg::Model<float> model(cfg);
  model.load(a.checkpoint);
  auto report = tg::evaluate(model, ds, a.batch);

  char line[256];
  std::snprintf(line, sizeof(line), "oa=%.10g ba=%.10g kappa=%.10g samples=%zu params=%zu",
                report.oa, report.ba, report.kappa, ds.size(), report.parameter_count);
  std::cout << line << '\n';
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';

  if (!a.out.empty()) {
    StagedDir out(a.out, a.force);
    tg::save_confusion_csv(report.confusion, classes, (out.path() / "confusion.csv").string());
    std::ofstream rep(out.path() / "report.txt");
    rep << line << '\n';
    for (std::size_t i = 0; i < report.per_class_precision.size(); ++i)
      rep << "precision[" << classes[i] << "]=" << report.per_class_precision[i] << '\n';
    write_run_manifest(out.path(), "eval",
                       json{{"checkpoint", a.checkpoint}, {"data", a.data}, {"batch", a.batch}},
                       0, started);
    out.publish();
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string data;
  std::string out;
  std::vector<std::string> triples;
  tg::ModelConfig model;
  tg::TrainConfig train;
  bool force = false;
};

int cmd_sweep_k(SweepArgs a) {
  const std::string started = now_iso8601();
  // validate the whole candidate list before any compute
  std::vector<tg::ScaleTriple> parsed;
  for (const auto& t : a.triples) {
    tg::ScaleTriple s;
    if (std::sscanf(t.c_str(), "%d,%d,%d", &s.k_local, &s.k_branch, &s.k_canopy) != 3)
      throw tg::ConfigError("sweep-k: cannot parse triple '" + t + "', expected k1,k2,k3");
    s.validate_hierarchy();
    parsed.push_back(s);
  }
  if (parsed.empty()) throw tg::ConfigError("sweep-k: no triples given");

  const fs::path data(a.data);
  const auto classes = read_classes(data / "classes.txt");
  auto train_ds = load_split(data / "train.tgpc", classes);
  auto test_ds = load_split(data / "test.tgpc", classes);
  a.model.num_classes = static_cast<int>(classes.size());

  StagedDir out(a.out, a.force);
  std::ofstream csv(out.path() / "sweep.csv");
  csv << "k1,k2,k3,oa,ba,kappa,epoch_time\n";
  for (const auto& s : parsed) {
    tg::ModelConfig mc = a.model;
    mc.scales = s;
    mc.init_seed = a.train.seed + 1;
    tg::Model<float> model(mc);
    const fs::path run_dir = out.path() / ("k" + std::to_string(s.k_local) + "_" +
                                           std::to_string(s.k_branch) + "_" +
                                           std::to_string(s.k_canopy));
    auto result = tg::train(model, train_ds, test_ds, a.train, run_dir);
    const auto& best = result.history[static_cast<std::size_t>(result.best_epoch)];
    double mean_epoch_s = 0;
    for (const auto& e : result.history) mean_epoch_s += e.epoch_time_s;
    mean_epoch_s /= static_cast<double>(result.history.size());
    char row[256];
    std::snprintf(row, sizeof(row), "%d,%d,%d,%.10g,%.10g,%.10g,%.6g\n", s.k_local, s.k_branch,
                  s.k_canopy, best.test_oa, best.test_ba, best.test_kappa, mean_epoch_s);
    csv << row;
    csv.flush();
    std::cout << "sweep-k: (" << s.k_local << ',' << s.k_branch << ',' << s.k_canopy
              << ") best OA " << best.test_oa << "%\n";
  }
  csv.close();
  json cfg;
  cfg["data"] = a.data;
  cfg["triples"] = a.triples;
  cfg["train"] = train_config_json(a.train);
  write_run_manifest(out.path(), "sweep-k", cfg, a.train.seed, started);
  out.publish();
  return 0;
}

void add_model_options(CLI::App* cmd, tg::ModelConfig& m) {
  cmd->add_option("--variant", [&m](const std::vector<std::string>& v) {
        m.variant = tg::variant_from_name(v.at(0));
        return true;
      }, "model variant: msdgcnn_pp | msdgcnn_parallel | dgcnn")
      ->type_name("NAME");
  cmd->add_option("--k1", m.scales.k_local, "local-scale neighbor count");
  cmd->add_option("--k2", m.scales.k_branch, "branch-scale neighbor count");
  cmd->add_option("--k3", m.scales.k_canopy, "canopy-scale neighbor count");
  cmd->add_option("--backbone-k", m.backbone_k, "neighbor count for trunk graph layers");
  cmd->add_option("--fusion-width", m.fusion_width, "fusion output channels");
  cmd->add_option("--emb-dim", m.embedding_dim, "global embedding width");
  cmd->add_option("--dropout", m.dropout, "head dropout probability");
  cmd->add_option("--leaky-slope", m.leaky_slope, "LeakyReLU negative slope");
}

void add_train_options(CLI::App* cmd, tg::TrainConfig& t) {
  cmd->add_option("--epochs", t.epochs, "training epochs");
  cmd->add_option("--batch", t.batch_size, "batch size");
  cmd->add_option("--lr", t.lr, "initial learning rate");
  cmd->add_option("--weight-decay", t.weight_decay, "L2 weight decay");
  cmd->add_option("--eta-min", t.eta_min,
                  "cosine schedule floor (default equals --lr, i.e. constant; set 0 for a full decay)");
  cmd->add_option("--seed", t.seed, "run seed (data order, dropout, augmentation)");
  cmd->add_flag("--augment", t.augment, "apply tree augmentation to training batches");
  cmd->add_option("--sigma-j", t.aug.sigma_j, "height-scaled jitter std");
  cmd->add_option("--scale-min", t.aug.s_min, "lower scaling bound");
  cmd->add_option("--scale-max", t.aug.s_max, "upper scaling bound");
  cmd->add_flag("!--no-rotate", t.aug.rotate, "disable rotation augmentation");
  cmd->add_flag("!--no-delete", t.aug.delete_points, "disable deletion augmentation");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical multi-scale dynamic-graph point cloud classifier"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from an INI file (flags take precedence)");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "generate the synthetic 3-class shape set");
  c_synth->add_option("--out", synth.out, "output directory")->required();
  c_synth->add_option("--n-per-class", synth.n_per_class, "clouds per class")
      ->check(CLI::Range(4, 1000000));
  c_synth->add_option("--points", synth.points, "points per cloud");
  c_synth->add_option("--train-frac", synth.train_frac, "train fraction of each class");
  c_synth->add_option("--seed", synth.seed, "generator seed");
  c_synth->add_flag("--force", synth.force, "overwrite existing output");

  PreprocessArgs pre;
  std::int64_t pre_seed = -1;
  auto* c_pre = app.add_subcommand("preprocess", "voxel/FPS/normalize a manifest of clouds");
  c_pre->add_option("--manifest", pre.manifest, "manifest csv (path,class,split)")->required();
  c_pre->add_option("--out", pre.out, "output directory")->required();
  c_pre->add_option("--points", pre.points, "target points per cloud");
  c_pre->add_option("--voxel-target", pre.voxel_target, "voxel stage target count");
  c_pre->add_option("--voxel-tol", pre.voxel_tol, "voxel stage tolerance");
  c_pre->add_option("--seed", pre_seed, "sampling seed (omit for deterministic index-0 starts)");
  c_pre->add_flag("--force", pre.force, "overwrite existing output");

  AugPreviewArgs aug;
  auto* c_aug = app.add_subcommand("augment-preview", "emit before/after xyz for one cloud");
  c_aug->add_option("--in", aug.in, "input xyz cloud")->required();
  c_aug->add_option("--out", aug.out, "output directory")->required();
  c_aug->add_option("--sigma-j", aug.aug.sigma_j, "height-scaled jitter std");
  c_aug->add_flag("!--no-rotate", aug.aug.rotate, "disable rotation");
  c_aug->add_flag("!--no-delete", aug.aug.delete_points, "disable deletion");
  c_aug->add_option("--scale-min", aug.aug.s_min, "lower scaling bound");
  c_aug->add_option("--scale-max", aug.aug.s_max, "upper scaling bound");
  c_aug->add_option("--seed", aug.aug.seed, "augmentation seed");
  c_aug->add_flag("--force", aug.force, "overwrite existing output");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "train a model on a preprocessed dataset");
  c_train->add_option("--data", tr.data, "dataset dir (train.tgpc/test.tgpc/classes.txt)")
      ->required();
  c_train->add_option("--out", tr.out, "artifact directory")->required();
  add_model_options(c_train, tr.model);
  add_train_options(c_train, tr.train);
  c_train->add_flag("--no-class-weights", tr.no_class_weights, "disable class weighting");
  c_train->add_flag("--svg", tr.svg, "also render training curves as svg");
  c_train->add_flag("--force", tr.force, "overwrite existing output");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint");
  c_eval->add_option("--checkpoint", ev.checkpoint, "TGNW checkpoint")->required();
  c_eval->add_option("--model-cfg", ev.model_cfg, "model.cfg written at train time")->required();
  c_eval->add_option("--data", ev.data, "TGPC dataset file")->required();
  c_eval->add_option("--classes", ev.classes, "classes.txt")->required();
  c_eval->add_option("--out", ev.out, "optional report directory");
  c_eval->add_option("--batch", ev.batch, "eval batch size");
  c_eval->add_flag("--force", ev.force, "overwrite existing output");

  SweepArgs sw;
  auto* c_sweep = app.add_subcommand("sweep-k", "train across scale triples, one csv row each");
  c_sweep->add_option("--data", sw.data, "dataset dir")->required();
  c_sweep->add_option("--out", sw.out, "output directory")->required();
  c_sweep->add_option("--triples", sw.triples, "scale triples, each as k1,k2,k3")
      ->required()
      ->expected(-1);
  add_model_options(c_sweep, sw.model);
  add_train_options(c_sweep, sw.train);
  c_sweep->add_flag("--force", sw.force, "overwrite existing output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_synth->parsed()) return cmd_synth(synth);
    if (c_pre->parsed()) {
      if (pre_seed >= 0) pre.seed = static_cast<std::uint64_t>(pre_seed);
      return cmd_preprocess(pre);
    }
    if (c_aug->parsed()) return cmd_augment_preview(aug);
    if (c_train->parsed()) return cmd_train(tr);
    if (c_eval->parsed()) return cmd_eval(ev);
    if (c_sweep->parsed()) return cmd_sweep_k(sw);
  } catch (const tg::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
