// lidar2mm command-line tool: preprocess, convert, loss, metrics, stats.
#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "lidar2mm/lidar2mm.hpp"

namespace fs = std::filesystem;
using namespace lidar2mm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitParse = 1;     // malformed files, I/O failures
constexpr int kExitContract = 2;  // violated data contracts

struct CommonOpts {
  std::string in;
  std::string out;
  std::string config;
  std::optional<std::uint64_t> seed;
  unsigned jobs = 1;
  std::string format = "text";
  bool verbose = false;
};

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

FileFormat parse_format(const std::string& s) {
  if (s == "text") return FileFormat::kText;
  if (s == "binary") return FileFormat::kBinary;
  throw ContractError("unknown --format '" + s + "' (expected text or binary)");
}

LoadedConfig load_config_opt(const std::string& path) {
  if (path.empty()) return LoadedConfig{};
  return load_config(path);
}

std::uint64_t resolve_seed(const CommonOpts& opts, const LoadedConfig& cfg) {
  if (opts.seed) return *opts.seed;
  if (cfg.seed) return *cfg.seed;
  throw ContractError("seed required (pass --seed or set 'seed' in the config)");
}

struct FileTask {
  fs::path in;
  fs::path out;  // empty for read-only commands
  std::string id;
};

// Expands --in (file or directory) and mirrors names into --out when
// out_is_dir. Directory listings are sorted so behavior never depends on
// filesystem order.
std::vector<FileTask> collect_tasks(const std::string& in,
                                    const std::string& out) {
  const fs::path in_path(in);
  std::vector<FileTask> tasks;
  if (fs::is_directory(in_path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(in_path)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      throw ContractError(in + ": directory contains no sequence files");
    }
    fs::path out_dir(out);
    if (!out.empty()) fs::create_directories(out_dir);
    for (const fs::path& f : files) {
      FileTask t;
      t.in = f;
      t.id = f.stem().string();
      if (!out.empty()) t.out = out_dir / f.filename();
      tasks.push_back(std::move(t));
    }
    return tasks;
  }
  if (!fs::exists(in_path)) throw ParseError(in + ": no such file");
  FileTask t;
  t.in = in_path;
  t.id = in_path.stem().string();
  if (!out.empty()) {
    t.out = fs::path(out);
    if (t.out.has_parent_path()) fs::create_directories(t.out.parent_path());
  }
  tasks.push_back(std::move(t));
  return tasks;
}

int classify_exception() {
  try {
    throw;
  } catch (const ContractError&) {
    return kExitContract;
  } catch (const std::invalid_argument&) {
    return kExitContract;
  } catch (const std::exception&) {
    return kExitParse;
  }
}

// Runs one worker per task on up to `jobs` threads. Summaries print in task
// order; on failure the first failing task (in task order) decides the exit
// code. Determinism does not depend on scheduling: every task derives its
// randomness from (seed, task id) alone.
template <typename Worker>
int run_tasks(const std::vector<FileTask>& tasks, unsigned jobs,
              Worker&& worker) {
  std::vector<std::string> summaries(tasks.size());
  std::vector<std::string> errors(tasks.size());
  std::vector<int> codes(tasks.size(), kExitOk);
  std::atomic<std::size_t> next{0};
  const unsigned n_threads =
      std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(tasks.size())));
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        summaries[i] = worker(tasks[i]);
      } catch (const std::exception& e) {
        errors[i] = e.what();
        codes[i] = classify_exception();
      }
    }
  };
  if (n_threads == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(body);
    for (std::thread& th : pool) th.join();
  }
  int rc = kExitOk;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (codes[i] != kExitOk) {
      std::cerr << "error: " << errors[i] << "\n";
      if (rc == kExitOk) rc = codes[i];
    } else if (!summaries[i].empty()) {
      std::cout << summaries[i] << "\n";
    }
  }
  return rc;
}

// --- preprocess -----------------------------------------------------------

int cmd_preprocess(const CommonOpts& opts, bool augment) {
  const LoadedConfig cfg = load_config_opt(opts.config);
  const std::uint64_t seed = resolve_seed(opts, cfg);
  const FileFormat format = parse_format(opts.format);
  const auto tasks = collect_tasks(opts.in, opts.out);
  const SeededRng root(seed);
  return run_tasks(tasks, opts.jobs, [&](const FileTask& task) {
    const Sequence seq = read_sequence(task.in);
    PreprocessResult res =
        preprocess_sequence(seq, cfg.preprocess, root.split(task.id), augment);
    write_sequence(res.sequence, task.out, format);
    std::string line = "sequence=" + task.id +
                       " frames=" + std::to_string(res.sequence.frames.size()) +
                       " normalized_from=" +
                       (res.offset_from_joints ? "joints" : "points");
    if (opts.verbose) {
      line += " offset=" + fmt6(res.offset.x()) + "," + fmt6(res.offset.y()) +
              "," + fmt6(res.offset.z());
    }
    return line;
  });
}

// --- convert ---------------------------------------------------------------

std::string stage_sidecar_csv(const std::vector<FrameStageCounts>& counts) {
  std::string csv = "t,input,after_npa,after_fpf,after_rs,after_ni\n";
  for (const FrameStageCounts& c : counts) {
    csv += std::to_string(c.t) + "," + std::to_string(c.input) + "," +
           std::to_string(c.after_npa) + "," + std::to_string(c.after_fpf) +
           "," + std::to_string(c.after_rs) + "," + std::to_string(c.after_ni) +
           "\n";
  }
  return csv;
}

int cmd_convert(const CommonOpts& opts) {
  const LoadedConfig cfg = load_config_opt(opts.config);
  const std::uint64_t seed = resolve_seed(opts, cfg);
  const FileFormat format = parse_format(opts.format);
  const auto tasks = collect_tasks(opts.in, opts.out);
  const SeededRng root(seed);
  return run_tasks(tasks, opts.jobs, [&](const FileTask& task) {
    const Sequence seq = read_sequence(task.in);
    if (seq.source != SourceTag::kLidar) {
      throw ContractError(task.in.string() +
                          ": convert expects a lidar-tagged sequence");
    }
    ConvertResult res =
        convert_sequence(seq, cfg.conversion, root.split(task.id));
    write_sequence(res.sequence, task.out, format);
    write_file_bytes(fs::path(task.out.string() + ".stages.csv"),
                     stage_sidecar_csv(res.stage_counts));

    double mean_in = 0, mean_npa = 0, mean_fpf = 0, mean_rs = 0, mean_ni = 0;
    for (const FrameStageCounts& c : res.stage_counts) {
      mean_in += static_cast<double>(c.input);
      mean_npa += static_cast<double>(c.after_npa);
      mean_fpf += static_cast<double>(c.after_fpf);
      mean_rs += static_cast<double>(c.after_rs);
      mean_ni += static_cast<double>(c.after_ni);
    }
    const double n = static_cast<double>(res.stage_counts.size());
    return "sequence=" + task.id + " frames=" +
           std::to_string(res.stage_counts.size()) + " mean_in=" +
           fmt2(mean_in / n) + " mean_npa=" + fmt2(mean_npa / n) +
           " mean_fpf=" + fmt2(mean_fpf / n) + " mean_rs=" +
           fmt2(mean_rs / n) + " mean_ni=" + fmt2(mean_ni / n);
  });
}

// --- loss -------------------------------------------------------------------

int cmd_loss(const CommonOpts& opts, const std::string& gt_path,
             std::int64_t frame_t, bool frame_given) {
  const LoadedConfig cfg = load_config_opt(opts.config);
  const Sequence pred = read_sequence(opts.in);
  if (!pred.labeled()) {
    throw ContractError(opts.in + ": missing prediction skeletons");
  }
  if (pred.frames.size() < 2) {
    throw ContractError(opts.in + ": need at least two frames for a flow pair");
  }
  std::size_t idx = 1;
  if (frame_given) {
    bool found = false;
    for (std::size_t i = 0; i < pred.frames.size(); ++i) {
      if (pred.frames[i].t == frame_t) {
        idx = i;
        found = true;
        break;
      }
    }
    if (!found) {
      throw ContractError(opts.in + ": no frame with t=" +
                          std::to_string(frame_t));
    }
    if (idx == 0) {
      throw ContractError(opts.in + ": frame t=" + std::to_string(frame_t) +
                          " has no predecessor");
    }
  }
  const Frame& cur = pred.frames[idx];
  const Frame& prev = pred.frames[idx - 1];
  LossReport report =
      utcl_loss(cur.cloud, *cur.skeleton, *prev.skeleton, cfg.utcl);

  if (!gt_path.empty()) {
    const Sequence gt = read_sequence(gt_path);
    if (!gt.labeled()) {
      throw ContractError(gt_path + ": ground truth has no skeletons");
    }
    const Skeleton* gt_skel = nullptr;
    for (const Frame& f : gt.frames) {
      if (f.t == cur.t) {
        gt_skel = &*f.skeleton;
        break;
      }
    }
    if (!gt_skel) {
      throw ContractError(gt_path + ": no ground-truth frame with t=" +
                          std::to_string(cur.t));
    }
    report.l_lab = mse_loss(*cur.skeleton, *gt_skel);
    report.l_total = total_loss(*report.l_lab, report.l_con, cfg.utcl);
  }

  std::cout << "l_dyn=" << fmt6(report.l_dyn) << "\n";
  std::cout << "l_sta=" << fmt6(report.l_sta) << "\n";
  std::cout << "l_con=" << fmt6(report.l_con) << "\n";
  if (report.l_lab) std::cout << "l_lab=" << fmt6(*report.l_lab) << "\n";
  if (report.l_total) std::cout << "l_total=" << fmt6(*report.l_total) << "\n";
  auto join = [](const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(v[i]);
    }
    return s;
  };
  std::cout << "dyn_indices=" << join(report.dyn_indices) << "\n";
  std::cout << "sta_indices=" << join(report.sta_indices) << "\n";
  return kExitOk;
}

// --- metrics ----------------------------------------------------------------

int cmd_metrics(const std::string& pred_path, const std::string& gt_path) {
  const bool pred_dir = fs::is_directory(pred_path);
  const bool gt_dir = fs::is_directory(gt_path);
  if (pred_dir != gt_dir) {
    throw ContractError("--in and --gt must both be files or both directories");
  }
  std::vector<std::pair<fs::path, fs::path>> pairs;
  if (pred_dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(pred_path)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      throw ContractError(pred_path + ": directory contains no sequence files");
    }
    for (const fs::path& f : files) {
      const fs::path g = fs::path(gt_path) / f.filename();
      if (!fs::exists(g)) {
        throw ContractError(g.string() + ": no ground truth for " + f.string());
      }
      pairs.emplace_back(f, g);
    }
  } else {
    pairs.emplace_back(pred_path, gt_path);
  }

  double sum_mpjpe = 0, sum_pa = 0;
  std::size_t total_frames = 0;
  for (const auto& [p, g] : pairs) {
    const Sequence pred = read_sequence(p);
    const Sequence gt = read_sequence(g);
    const SequenceMetrics m = sequence_metrics(pred, gt);
    std::cout << "sequence=" << p.stem().string() << " mpjpe_cm="
              << fmt2(m.mpjpe_cm) << " pa_mpjpe_cm=" << fmt2(m.pa_mpjpe_cm)
              << "\n";
    sum_mpjpe += m.mpjpe_cm * static_cast<double>(m.frame_count);
    sum_pa += m.pa_mpjpe_cm * static_cast<double>(m.frame_count);
    total_frames += m.frame_count;
  }
  const double n = static_cast<double>(total_frames);
  std::cout << "aggregate mpjpe_cm=" << fmt2(sum_mpjpe / n) << " pa_mpjpe_cm="
            << fmt2(sum_pa / n) << "\n";
  return kExitOk;
}

// --- stats ------------------------------------------------------------------

struct StageRow {
  std::size_t input = 0, after_npa = 0, after_fpf = 0, after_rs = 0,
              after_ni = 0;
};

std::map<std::int64_t, StageRow> parse_sidecar(const fs::path& path) {
  const std::string text = read_file_bytes(path);
  std::map<std::int64_t, StageRow> rows;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "t,input,after_npa,after_fpf,after_rs,after_ni") {
        throw ParseError(path.string() + ":1: bad stage log header");
      }
      continue;
    }
    std::array<long long, 6> vals{};
    int field = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        if (field >= 6) throw ParseError(path.string() + ": too many columns");
        const std::string tok = line.substr(start, i - start);
        try {
          vals[field] = std::stoll(tok);
        } catch (...) {
          throw ParseError(path.string() + ":" + std::to_string(line_no) +
                           ": bad count '" + tok + "'");
        }
        ++field;
        start = i + 1;
      }
    }
    if (field != 6) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected 6 columns");
    }
    StageRow r;
    r.input = static_cast<std::size_t>(vals[1]);
    r.after_npa = static_cast<std::size_t>(vals[2]);
    r.after_fpf = static_cast<std::size_t>(vals[3]);
    r.after_rs = static_cast<std::size_t>(vals[4]);
    r.after_ni = static_cast<std::size_t>(vals[5]);
    rows[vals[0]] = r;
  }
  return rows;
}

constexpr int kFlowBins = 10;
constexpr double kFlowBinWidth = 0.02;  // meters; last bin catches the rest

int cmd_stats(const std::vector<std::string>& inputs, const std::string& out,
              const std::string& stages_path) {
  if (!stages_path.empty() && inputs.size() != 1) {
    throw ContractError("--stages requires exactly one --in file");
  }
  std::map<std::int64_t, StageRow> stages;
  if (!stages_path.empty()) stages = parse_sidecar(stages_path);

  std::string csv =
      "sequence,t,points,input,after_npa,after_fpf,after_rs,after_ni,"
      "flow_mean_m";
  for (int b = 0; b < kFlowBins; ++b) csv += ",flow_h" + std::to_string(b);
  csv += "\n";

  for (const std::string& in : inputs) {
    const fs::path path(in);
    const Sequence seq = read_sequence(path);
    const std::string id = path.stem().string();
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
      const Frame& f = seq.frames[i];
      csv += id + "," + std::to_string(f.t) + "," +
             std::to_string(f.cloud.size());
      if (!stages_path.empty()) {
        const auto it = stages.find(f.t);
        if (it == stages.end()) {
          throw ContractError(stages_path + ": no stage counts for frame t=" +
                              std::to_string(f.t));
        }
        csv += "," + std::to_string(it->second.input) + "," +
               std::to_string(it->second.after_npa) + "," +
               std::to_string(it->second.after_fpf) + "," +
               std::to_string(it->second.after_rs) + "," +
               std::to_string(it->second.after_ni);
      } else {
        csv += ",,,,,";
      }
      if (seq.labeled() && i > 0) {
        const auto flow =
            skeleton_flow(*f.skeleton, *seq.frames[i - 1].skeleton);
        double mean = 0;
        std::array<int, kFlowBins> hist{};
        for (const Vec3& v : flow) {
          const double n = v.norm();
          mean += n;
          int bin = static_cast<int>(n / kFlowBinWidth);
          if (bin >= kFlowBins) bin = kFlowBins - 1;
          ++hist[bin];
        }
        csv += "," + fmt6(mean / kJointCount);
        for (int b = 0; b < kFlowBins; ++b) {
          csv += "," + std::to_string(hist[b]);
        }
      } else {
        csv += ",";
        for (int b = 0; b < kFlowBins; ++b) csv += ",";
      }
      csv += "\n";
    }
  }
  write_file_bytes(out, csv);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic LiDAR-to-mmWave sequence tooling"};
  app.require_subcommand(1);

  CommonOpts opts;
  bool augment = false;
  std::string gt_path;
  std::int64_t frame_t = 0;
  std::vector<std::string> stat_inputs;
  std::string stages_path;

  auto add_common = [&](CLI::App* sub, bool with_out, bool with_seed) {
    sub->add_option("--in", opts.in, "input sequence file or directory")
        ->required();
    if (with_out) {
      sub->add_option("--out", opts.out, "output file or directory")->required();
    }
    sub->add_option("--config", opts.config, "JSON config file");
    if (with_seed) {
      sub->add_option("--seed", opts.seed, "64-bit seed for all randomness");
      sub->add_option("--jobs", opts.jobs, "worker threads for directory input")
          ->check(CLI::Range(1u, 256u));
      sub->add_option("--format", opts.format, "output encoding: text|binary")
          ->check(CLI::IsMember({"text", "binary"}));
    }
    sub->add_flag("-v,--verbose", opts.verbose, "extra per-sequence detail");
  };

  CLI::App* prep = app.add_subcommand(
      "preprocess", "normalize, box-filter, optionally augment, resample");
  add_common(prep, true, true);
  prep->add_flag("--augment", augment,
                 "apply one random similarity transform per sequence");

  CLI::App* conv = app.add_subcommand(
      "convert", "turn labeled lidar sequences into mmwave-style ones");
  add_common(conv, true, true);

  CLI::App* loss = app.add_subcommand(
      "loss", "evaluate the temporal consistency loss on a prediction pair");
  add_common(loss, false, false);
  loss->add_option("--gt", gt_path, "ground-truth sequence for l_lab");
  CLI::Option* frame_opt = loss->add_option(
      "--frame", frame_t, "timestep of the current frame (default: second frame)");

  CLI::App* met = app.add_subcommand(
      "metrics", "MPJPE / PA-MPJPE between prediction and ground truth");
  met->add_option("--in", opts.in, "predicted sequence file or directory")
      ->required();
  met->add_option("--gt", gt_path, "ground-truth sequence file or directory")
      ->required();
  met->add_flag("-v,--verbose", opts.verbose, "extra detail");

  CLI::App* stats = app.add_subcommand(
      "stats", "per-frame point counts and flow histograms as CSV");
  stats->add_option("--in", stat_inputs, "sequence file(s)")->required();
  stats->add_option("--out", opts.out, "output CSV path")->required();
  stats->add_option("--stages", stages_path,
                    "stage-count sidecar written by convert");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitParse;
  }

  try {
    if (prep->parsed()) return cmd_preprocess(opts, augment);
    if (conv->parsed()) return cmd_convert(opts);
    if (loss->parsed()) {
      return cmd_loss(opts, gt_path, frame_t, frame_opt->count() > 0);
    }
    if (met->parsed()) return cmd_metrics(opts.in, gt_path);
    if (stats->parsed()) return cmd_stats(stat_inputs, opts.out, stages_path);
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitContract;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParse;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitContract;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParse;
  }
  return kExitOk;
}
