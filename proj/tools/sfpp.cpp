// Command-line front end: synth, train, track, eval, gradcheck, ablate.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include "sfpp/checkpoint.hpp"
#include "sfpp/config.hpp"
#include "sfpp/gradcheck_suite.hpp"

namespace fs = std::filesystem;
using namespace sfpp;

namespace {

// Config keys exposed as --section.key on a subcommand.
struct KeyOptions {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* app) {
    const RunConfig defaults;
    app->add_option("--config", config_file, "config file with [section] and key = value lines");
    for (const auto& k : config_keys())
      options[k.name] = app->add_option("--" + k.name, values[k.name], k.help)->type_name("VALUE")->default_str(k.get(defaults))->group(
          "Config keys");
  }

  // defaults < config file < SFPP_SEED < flags
  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_file.empty()) apply_config_file(cfg, config_file);
    apply_environment(cfg);
    for (const auto& [name, opt] : options)
      if (opt->count() > 0) {
        try {
          set_config_key(cfg, name, values.at(name));
        } catch (const ConfigError& e) {
          throw ConfigError(std::string("--") + e.what());
        }
      }
    cfg.finalize();
    return cfg;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

void prepare_out(const fs::path& out, const RunConfig& cfg) {
  fs::create_directories(out);
  write_text(out / "config.ini", to_config_text(cfg));
}

std::string seq_name(const std::string& prefix, size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu", prefix.c_str(), i);
  return buf;
}

std::vector<Sequence> load_sequence_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::exists(e.path() / "groundtruth.csv")) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw IoError("no sequence directories under " + root.string());
  std::vector<Sequence> out;
  for (const auto& d : dirs) out.push_back(load_sequence(d));
  return out;
}

int cmd_synth(const RunConfig& cfg, const fs::path& out, const std::string& split) {
  prepare_out(out, cfg);
  auto emit = [&](bool held_out, const std::string& name) {
    const auto pool = make_pool(cfg.exp.world, held_out);
    for (size_t i = 0; i < pool.size(); ++i) save_sequence(pool[i], out / name / seq_name("seq", i));
    write_text(out / (name + "_scale_ratio.csv"), scale_ratio_stats(pool).to_csv());
    std::cout << "wrote " << pool.size() << " sequences to " << (out / name).string() << '\n';
  };
  if (split == "train" || split == "both") emit(false, "train");
  if (split == "test" || split == "both") emit(true, "test");
  return 0;
}

int cmd_train(const RunConfig& cfg, const fs::path& out, const std::string& data) {
  prepare_out(out, cfg);
  const auto pool = data.empty() ? make_pool(cfg.exp.world, false) : load_sequence_dirs(data);
  const auto model = SiamModel<float>::init(cfg.exp.model, cfg.exp.init_seed);
  TrainOptions opt;
  opt.diagnostic_dir = out / "diagnostics";
  const std::int64_t total = cfg.exp.train.total_steps();
  opt.on_step = [total](const StepLog& s) {
    if (s.step % 100 == 0 || s.step + 1 == total)
      std::fprintf(stderr, "step %lld/%lld lr %.3g loss %.4f\n", static_cast<long long>(s.step),
                   static_cast<long long>(total), s.lr, s.total);
  };
  const TrainResult r = train(model, pool, cfg.exp.train, cfg.exp.loss, cfg.exp.sampler, cfg.exp.anchors, opt);
  save_checkpoint({r.model.config(), r.model.parameters(), r.state.velocity, r.state.step}, out / "model.ckpt");
  write_text(out / "loss.csv", loss_log_csv(r.log));
  std::cout << "wrote " << (out / "model.ckpt").string() << " after " << r.state.step << " steps\n";
  return 0;
}

int cmd_track(const RunConfig& cfg, const fs::path& ckpt_path, const std::vector<std::string>& sequences,
              const fs::path& out, bool dump_maps, int jobs) {
  prepare_out(out, cfg);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  AnchorConfig anchors = cfg.exp.anchors;
  const NetworkResponse model(ckpt.model(), anchors);
  parallel_for(sequences.size(), jobs, [&](size_t i) {
    const fs::path dir = sequences[i];
    const Sequence seq = load_sequence(dir);
    const fs::path dest = out / dir.filename();
    fs::create_directories(dest);
    MapSink sink;
    if (dump_maps) {
      fs::create_directories(dest / "maps");
      sink = [&dest](int t, const Tensor<float>& map) {
        char name[32];
        std::snprintf(name, sizeof name, "%05d", t);
        write_text(dest / "maps" / (std::string(name) + ".csv"), map_csv(map));
        write_pgm(map, dest / "maps" / (std::string(name) + ".pgm"));
      };
    }
    const TrackOutput result = track_sequence(model, seq.frames, seq.gt.at(0), cfg.exp.track, sink);
    write_text(dest / "results.csv", results_csv(result));
  });
  std::cout << "tracked " << sequences.size() << " sequence(s) into " << out.string() << '\n';
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::vector<std::string>& results, const std::vector<std::string>& gts,
             const fs::path& out, int jobs) {
  if (results.size() != gts.size())
    throw InvalidArgument("eval: " + std::to_string(results.size()) + " results files but " +
                          std::to_string(gts.size()) + " ground-truth files");
  prepare_out(out, cfg);
  std::vector<EvalReport> reports(results.size());
  parallel_for(results.size(), jobs, [&](size_t i) {
    reports[i] = eval_sequence(load_results(results[i]), load_groundtruth(gts[i]));
  });
  std::string per_seq = "results,frames,ao,sr50,sr75,precision20,failures,accuracy\n";
  char line[512];
  for (size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    std::snprintf(line, sizeof line, "%s,%d,%.6f,%.6f,%.6f,%.6f,%d,%.6f\n", results[i].c_str(), r.frames, r.ao,
                  r.sr50, r.sr75, r.precision20, r.failures, r.accuracy);
    per_seq += line;
  }
  const EvalReport all = aggregate(reports);
  write_text(out / "per_sequence.csv", per_seq);
  write_text(out / "report.txt", "sequences = " + std::to_string(reports.size()) + "\n" + all.summary());
  std::cout << all.summary();
  return 0;
}

int cmd_gradcheck(int instances, std::uint64_t seed, const std::string& out) {
  const GradcheckSuite suite = run_gradcheck_suite(instances, seed);
  std::cout << suite.report();
  if (!out.empty()) write_text(out, suite.report());
  return suite.pass() ? 0 : 1;
}

int cmd_ablate(const RunConfig& cfg, const fs::path& out) {
  prepare_out(out, cfg);
  const AblationResult r = run_ablation(cfg.exp, [](const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); });
  write_text(out / "table.csv", r.table_csv());
  std::ostringstream summary;
  summary << "# score histograms: " << r.variants.front().scores.success.counts.size()
          << " uniform bins over [0,1]; failure = IoU <= " << cfg.exp.failure_iou << "\n";
  for (const auto& v : r.variants) {
    write_text(out / ("scores_" + v.name + ".csv"), v.scores.to_csv());
    summary << v.name << ".ao = " << v.report.ao << '\n'
            << v.name << ".sr50 = " << v.report.sr50 << '\n'
            << v.name << ".ks = " << v.scores.ks << '\n'
            << v.name << ".score_degenerate = " << (v.scores.degenerate ? "true" : "false") << '\n'
            << v.name << ".train_seconds = " << v.train_seconds << '\n';
    if (v.anchor_iou) {
      write_text(out / "anchor_iou_pred.csv", v.anchor_iou->pred_gt.to_csv());
      write_text(out / "anchor_iou_anchor.csv", v.anchor_iou->anchor_gt.to_csv());
      summary << v.name << ".iou_pred_gt.mean_success = " << v.anchor_iou->pred_gt.mean_success << '\n'
              << v.name << ".iou_pred_gt.mean_failure = " << v.anchor_iou->pred_gt.mean_failure << '\n'
              << v.name << ".iou_anchor_gt.mean_success = " << v.anchor_iou->anchor_gt.mean_success << '\n'
              << v.name << ".iou_anchor_gt.mean_failure = " << v.anchor_iou->anchor_gt.mean_failure << '\n';
    }
  }
  write_text(out / "summary.txt", summary.str());
  std::cout << r.table_csv();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anchor-free siamese tracker: synthetic data, training, tracking and evaluation"};
  app.require_subcommand(1);
  int jobs = 1;

  auto* synth = app.add_subcommand("synth", "generate the synthetic train/test worlds");
  KeyOptions synth_keys;
  std::string synth_out, split = "both";
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--split", split, "train, test or both")->check(CLI::IsMember({"train", "test", "both"}));
  synth_keys.attach(synth);

  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  KeyOptions train_keys;
  std::string train_out, train_data;
  train_cmd->add_option("--out", train_out, "output directory (model.ckpt, loss.csv)")->required();
  train_cmd->add_option("--data", train_data, "directory of saved sequences (default: generate the world)");
  train_keys.attach(train_cmd);

  auto* track = app.add_subcommand("track", "track sequences with a checkpoint");
  KeyOptions track_keys;
  std::string ckpt, track_out;
  std::vector<std::string> sequences;
  bool dump_maps = false;
  track->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  track->add_option("--sequence", sequences, "sequence directory (repeatable)")->required();
  track->add_option("--out", track_out, "output directory")->required();
  track->add_flag("--dump-maps", dump_maps, "write the selection map of every frame as CSV and PGM");
  track->add_option("--jobs", jobs, "sequences tracked in parallel")->check(CLI::PositiveNumber);
  track_keys.attach(track);

  auto* eval = app.add_subcommand("eval", "score results files against ground truth");
  KeyOptions eval_keys;
  std::vector<std::string> results, gts;
  std::string eval_out;
  eval->add_option("--results", results, "results CSV (repeatable)")->required();
  eval->add_option("--groundtruth", gts, "ground-truth CSV, one per results file")->required();
  eval->add_option("--out", eval_out, "output directory")->required();
  eval->add_option("--jobs", jobs, "files evaluated in parallel")->check(CLI::PositiveNumber);
  eval_keys.attach(eval);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every op and the objective");
  int instances = 20;
  std::uint64_t gc_seed = 1;
  std::string gc_out;
  gradcheck->add_option("--instances", instances, "random instances per op")->default_str("20");
  gradcheck->add_option("--seed", gc_seed, "instance seed")->default_str("1");
  gradcheck->add_option("--out", gc_out, "also write the report to this file");

  auto* ablate = app.add_subcommand("ablate", "train and compare the quality and anchor variants");
  KeyOptions ablate_keys;
  std::string ablate_out;
  ablate->add_option("--out", ablate_out, "output directory")->required();
  ablate_keys.attach(ablate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "sfpp: error category=config exit=%d message=\"%s\"\n", exit_code(ErrorCategory::kConfig),
                 e.what());
    return exit_code(ErrorCategory::kConfig);
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_keys.resolve(), synth_out, split);
    if (train_cmd->parsed()) return cmd_train(train_keys.resolve(), train_out, train_data);
    if (track->parsed()) return cmd_track(track_keys.resolve(), ckpt, sequences, track_out, dump_maps, jobs);
    if (eval->parsed()) return cmd_eval(eval_keys.resolve(), results, gts, eval_out, jobs);
    if (gradcheck->parsed()) return cmd_gradcheck(instances, gc_seed, gc_out);
    if (ablate->parsed()) return cmd_ablate(ablate_keys.resolve(), ablate_out);
  } catch (const Error& e) {
    std::string msg = e.what();
    for (auto& c : msg)
      if (c == '\n' || c == '"') c = '\'';
    std::fprintf(stderr, "sfpp: error category=%s exit=%d message=\"%s\"\n", category_name(e.category()),
                 exit_code(e.category()), msg.c_str());
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "sfpp: error category=internal exit=1 message=\"%s\"\n", e.what());
    return 1;
  }
  return 0;
}
