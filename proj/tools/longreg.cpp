// longreg: keypoint-driven rigid registration of brain MRI.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "longreg/detector.hpp"
#include "longreg/errors.hpp"
#include "longreg/labels.hpp"
#include "longreg/nifti.hpp"
#include "longreg/phantom.hpp"
#include "longreg/pipeline.hpp"
#include "longreg/rigid_io.hpp"
#include "longreg/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace longreg;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

int exit_code(const Error& e) { return is_numerical(e.code()) ? kNumerical : kData; }

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("LONGREG_SEED");
  if (!v || !*v) return std::nullopt;
  char* end = nullptr;
  const unsigned long long s = std::strtoull(v, &end, 10);
  if (*end != '\0') throw Error(ErrorCode::InvalidArgument, std::string("LONGREG_SEED is not an integer: ") + v);
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

json matrix_json(const RigidTransform& t) {
  json rows = json::array();
  const Mat4 m = t.matrix();
  for (int r = 0; r < 4; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
  return rows;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "not a number in list: '" + item + "'");
    }
  }
  if (out.empty()) throw Error(ErrorCode::InvalidArgument, "empty list");
  return out;
}

// ---------------------------------------------------------------------------
// register / batch

struct RegisterArgs {
  std::string moving, fixed;
  std::string features_moving, features_fixed;
  std::string labels_moving, labels_fixed;
  std::string out_transform = "transform.txt";
  std::string moved, report, trace;
  std::string refine = "off";
  int refine_iters = 200;
  int refine_bins = 32;
  std::string refine_mask;
  std::string halfway = "off";
  bool no_conform = false;
  std::int64_t conform_size = 256;
  double conform_voxel = 1.0;
  double blur = 0.0;
  std::string classes = "J3";
};

void add_register_options(CLI::App* cmd, RegisterArgs& a, bool with_paths) {
  if (with_paths) {
    cmd->add_option("--moving", a.moving, "Moving image (NIfTI)")->required();
    cmd->add_option("--fixed", a.fixed, "Fixed image (NIfTI)")->required();
    cmd->add_option("--features-moving", a.features_moving, "4D feature maps of the moving image");
    cmd->add_option("--features-fixed", a.features_fixed, "4D feature maps of the fixed image");
    cmd->add_option("--labels-moving", a.labels_moving, "Moving label map (reference detector, Dice)");
    cmd->add_option("--labels-fixed", a.labels_fixed, "Fixed label map (reference detector, Dice)");
    cmd->add_option("-o,--out", a.out_transform, "Output transform (fixed -> moving world)");
    cmd->add_option("--moved", a.moved, "Write the moving image resampled onto the fixed grid");
    cmd->add_option("--report", a.report, "Write a JSON report");
    cmd->add_option("--trace", a.trace, "Write the refinement trace as TSV");
  }
  cmd->add_option("--refine", a.refine, "Instance-specific refinement metric")
      ->check(CLI::IsMember({"off", "mse", "mi"}));
  cmd->add_option("--refine-iters", a.refine_iters, "Refinement iterations")->check(CLI::PositiveNumber);
  cmd->add_option("--refine-bins", a.refine_bins, "Histogram bins for MI")->check(CLI::Range(8, 4096));
  cmd->add_option("--refine-mask", a.refine_mask, "Restrict refinement to non-zero voxels (fixed grid)");
  cmd->add_option("--halfway", a.halfway, "Evaluate the metric in halfway space")
      ->check(CLI::IsMember({"on", "off"}));
  cmd->add_flag("--no-conform", a.no_conform, "Refine on the input grids");
  cmd->add_option("--conform-size", a.conform_size, "Conformed grid size (voxels per side)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--conform-voxel", a.conform_voxel, "Conformed voxel size (mm)")->check(CLI::PositiveNumber);
  cmd->add_option("--blur", a.blur, "Reference detector mask blur sigma (mm)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--classes", a.classes, "Dice merge table: J3, J5 or a table file");
}

RegisterOptions make_register_options(const RegisterArgs& a) {
  RegisterOptions opt;
  opt.conform = !a.no_conform;
  opt.conform_size = a.conform_size;
  opt.conform_voxel_mm = a.conform_voxel;
  opt.blur_sigma_mm = a.blur;
  opt.refine = a.refine != "off";
  opt.refine_config.iterations = a.refine_iters;
  opt.refine_config.metric = a.refine == "mi" ? MetricKind::mi(a.refine_bins) : MetricKind::mse();
  opt.refine_config.use_halfway_space = a.halfway == "on";
  if (!a.refine_mask.empty()) opt.refine_config.mask = read_labels(a.refine_mask);
  opt.classes = MergeTable::from_spec(a.classes);
  return opt;
}

json config_json(const RegisterArgs& a) {
  return {{"moving", a.moving},
          {"fixed", a.fixed},
          {"features_moving", a.features_moving},
          {"features_fixed", a.features_fixed},
          {"labels_moving", a.labels_moving},
          {"labels_fixed", a.labels_fixed},
          {"refine", a.refine},
          {"refine_iters", a.refine_iters},
          {"refine_bins", a.refine_bins},
          {"refine_mask", a.refine_mask},
          {"halfway", a.halfway},
          {"conform", !a.no_conform},
          {"conform_size", a.conform_size},
          {"conform_voxel_mm", a.conform_voxel},
          {"blur_sigma_mm", a.blur},
          {"classes", a.classes}};
}

json report_json(const RegistrationReport& r, const RegisterArgs& a) {
  json j;
  j["tool"] = "longreg";
  j["version"] = "0.1.0";
  j["command"] = "register";
  j["config"] = config_json(a);
  j["transform"] = matrix_json(r.transform);
  j["transform_angle_deg"] = r.transform.angle() * 180.0 / 3.14159265358979323846;
  j["keypoint_transform"] = matrix_json(r.keypoint_transform);
  j["feature_source"] = r.feature_source;
  j["channels"] = r.channels;
  if (r.refinement) {
    const auto& ref = *r.refinement;
    j["refinement"] = {{"metric", a.refine == "mi" ? "mi" : "mse"},
                       {"halfway", a.halfway == "on"},
                       {"iterations_run", ref.trace.empty() ? 0 : ref.trace.back().iteration},
                       {"evaluations", ref.evaluations},
                       {"cost_before", ref.initial_cost},
                       {"cost_after", ref.final_cost}};
  }
  if (r.dice_before && r.dice_after) {
    j["dice"] = {{"classes", r.dice_classes},
                 {"before", r.dice_before->per_class},
                 {"after", r.dice_after->per_class},
                 {"mean_before", r.dice_before->mean()},
                 {"mean_after", r.dice_after->mean()},
                 {"empty_classes", r.dice_after->empty_classes}};
  }
  json timings = json::object();
  for (const auto& t : r.timings) timings[t.stage] = t.ms;
  j["timings_ms"] = timings;
  return j;
}

std::string trace_tsv(const RefineResult& r) {
  std::ostringstream out;
  out << "iteration\tcost\tstep\n" << std::setprecision(17);
  for (const auto& e : r.trace) out << e.iteration << '\t' << e.cost << '\t' << e.step << '\n';
  return out.str();
}

void run_register(const RegisterArgs& a) {
  const RegisterOptions opt = make_register_options(a);
  if (a.features_moving.empty() != a.features_fixed.empty()) {
    throw Error(ErrorCode::InvalidArgument, "--features-moving and --features-fixed go together");
  }
  if (a.labels_moving.empty() != a.labels_fixed.empty()) {
    throw Error(ErrorCode::InvalidArgument, "--labels-moving and --labels-fixed go together");
  }
  RegistrationInputs in;
  in.moving = read_volume(a.moving);
  in.fixed = read_volume(a.fixed);
  if (!a.features_moving.empty()) {
    in.moving_features = load_feature_maps(a.features_moving);
    in.fixed_features = load_feature_maps(a.features_fixed);
  }
  if (!a.labels_moving.empty()) {
    in.moving_labels = read_labels(a.labels_moving);
    in.fixed_labels = read_labels(a.labels_fixed);
  }
  const RegistrationReport r = register_pair(in, opt);

  write_transform(a.out_transform, r.transform);
  if (!a.moved.empty()) write_volume(a.moved, resample(in.moving, r.transform, in.fixed.geometry()));
  if (!a.report.empty()) write_text(a.report, report_json(r, a).dump(2) + "\n");
  if (!a.trace.empty() && r.refinement) write_text(a.trace, trace_tsv(*r.refinement));
}

// Manifest: tab-separated with a header naming the columns moving, fixed,
// out and optionally labels_moving, labels_fixed, features_moving,
// features_fixed. Each row writes <out>/transform.txt and <out>/report.json.
std::vector<std::map<std::string, std::string>> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open manifest " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, '\t');) cells.push_back(c);
    return cells;
  };
  std::string line;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') header = split(line);
  }
  for (const char* col : {"moving", "fixed", "out"}) {
    if (std::find(header.begin(), header.end(), col) == header.end()) {
      throw Error(ErrorCode::MalformedFile, path.string() + ": manifest header lacks column '" + col + "'");
    }
  }
  std::vector<std::map<std::string, std::string>> rows;
  const fs::path base = path.parent_path();
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::MalformedFile, path.string() + ": row has " + std::to_string(cells.size()) +
                                                " cells, header has " + std::to_string(header.size()));
    }
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      // Relative paths resolve against the manifest's directory.
      row[header[i]] = cells[i].empty() || fs::path(cells[i]).is_absolute() ? cells[i] : (base / cells[i]).string();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

int run_batch(const std::string& manifest, int jobs, const RegisterArgs& shared) {
  const auto rows = read_manifest(manifest);
  std::atomic<std::size_t> next{0};
  std::vector<int> codes(rows.size(), kOk);
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < rows.size(); i = next++) {
      const auto& row = rows[i];
      RegisterArgs a = shared;
      auto get = [&](const char* k) {
        auto it = row.find(k);
        return it == row.end() ? std::string() : it->second;
      };
      a.moving = get("moving");
      a.fixed = get("fixed");
      a.labels_moving = get("labels_moving");
      a.labels_fixed = get("labels_fixed");
      a.features_moving = get("features_moving");
      a.features_fixed = get("features_fixed");
      const fs::path out = get("out");
      a.out_transform = (out / "transform.txt").string();
      a.report = (out / "report.json").string();
      try {
        fs::create_directories(out);
        run_register(a);
      } catch (const Error& e) {
        codes[i] = exit_code(e);
        std::lock_guard lock(log_mutex);
        std::cerr << "row " << i + 1 << ": " << e.what() << '\n';
      } catch (const std::exception& e) {
        codes[i] = kData;
        std::lock_guard lock(log_mutex);
        std::cerr << "row " << i + 1 << ": " << e.what() << '\n';
      }
    }
  };
  std::vector<std::thread> pool;
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(rows.size())));
  for (int t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  int worst = kOk;
  for (int c : codes) worst = std::max(worst, c);
  return worst;
}

// ---------------------------------------------------------------------------
// apply / eval

struct ApplyArgs {
  std::string image, transform, reference, out;
  std::string interp = "trilinear";
  std::string half = "none";
  bool labels = false;
};

void run_apply(const ApplyArgs& a) {
  RigidTransform t = read_transform(a.transform);
  if (a.half == "+") {
    t = sqrt_rigid(t);
  } else if (a.half == "-") {
    t = invert(sqrt_rigid(t));
  }
  const Geometry target = read_nifti(a.reference).geometry;
  if (a.labels) {
    write_labels(a.out, resample(read_labels(a.image), t, target));
    return;
  }
  const Interpolation interp = a.interp == "nearest" ? Interpolation::Nearest : Interpolation::Linear;
  write_volume(a.out, resample(read_volume(a.image), t, target, interp));
}

std::string dice_tsv(const DiceScores& d, std::span<const std::int32_t> classes) {
  std::ostringstream out;
  out << "class\tdice\n" << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < classes.size(); ++i) out << classes[i] << '\t' << d.per_class[i] << '\n';
  out << "mean\t" << d.mean() << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// synth / sweep / phantom

std::string pair_manifest(const SynthConfig& cfg) {
  std::ostringstream out;
  out << "key\tvalue\n";
  for (const auto& [k, v] : cfg.entries()) out << k << '\t' << v << '\n';
  for (const auto& [k, v] : std::map<std::string, std::string>{{"moving_image", "moving_image.nii.gz"},
                                                                {"fixed_image", "fixed_image.nii.gz"},
                                                                {"moving_labels", "moving_labels.nii.gz"},
                                                                {"fixed_labels", "fixed_labels.nii.gz"},
                                                                {"true_rigid", "true_rigid.txt"}}) {
    out << k << '\t' << v << '\n';
  }
  return out.str();
}

void apply_settings(SynthConfig& cfg, const std::string& config_file, const std::vector<std::string>& sets) {
  if (!config_file.empty()) cfg.load(config_file);
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidArgument, "--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
}

std::vector<LabelMap> load_label_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  if (fs::is_regular_file(dir)) {
    files.push_back(dir);
  } else {
    if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, "no such label directory " + dir.string());
    for (const auto& e : fs::directory_iterator(dir)) {
      const std::string name = e.path().filename().string();
      if (name.ends_with(".nii") || name.ends_with(".nii.gz")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  }
  if (files.empty()) throw Error(ErrorCode::InvalidArgument, "no NIfTI label maps in " + dir.string());
  std::vector<LabelMap> out;
  for (const auto& f : files) out.push_back(read_labels(f));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"longreg: rigid registration of brain MRI from weighted keypoints"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "longreg 0.1.0");

  RegisterArgs reg;
  auto* cmd_register = app.add_subcommand("register", "Register a moving image to a fixed image");
  add_register_options(cmd_register, reg, true);

  ApplyArgs apply;
  auto* cmd_apply = app.add_subcommand("apply", "Resample an image with a transform");
  cmd_apply->add_option("--image", apply.image, "Input image")->required();
  cmd_apply->add_option("--transform", apply.transform, "Transform file (fixed -> moving)")->required();
  cmd_apply->add_option("--reference", apply.reference, "Image defining the output grid")->required();
  cmd_apply->add_option("-o,--out", apply.out, "Output image")->required();
  cmd_apply->add_option("--interp", apply.interp, "Interpolation")->check(CLI::IsMember({"trilinear", "nearest"}));
  cmd_apply->add_option("--half", apply.half, "Apply T^{1/2} (+) or T^{-1/2} (-)")
      ->check(CLI::IsMember({"none", "+", "-"}));
  cmd_apply->add_flag("--labels", apply.labels, "Treat the input as a label map (nearest, integer output)");

  std::string eval_moved, eval_fixed, eval_classes = "J3", eval_out;
  auto* cmd_eval = app.add_subcommand("eval", "Per-class Dice between two label maps");
  cmd_eval->add_option("--moved", eval_moved, "Moved label map")->required();
  cmd_eval->add_option("--fixed", eval_fixed, "Fixed label map")->required();
  cmd_eval->add_option("--classes", eval_classes, "J3, J5 or a merge table file");
  cmd_eval->add_option("-o,--out", eval_out, "Write the TSV here instead of stdout");

  std::string synth_labels, synth_config, synth_out;
  std::vector<std::string> synth_sets;
  std::optional<std::uint64_t> synth_seed;
  auto* cmd_synth = app.add_subcommand("synth", "Generate a synthetic within-subject pair");
  cmd_synth->add_option("--labels", synth_labels, "Source label map")->required();
  cmd_synth->add_option("--config", synth_config, "key = value settings file");
  cmd_synth->add_option("--set", synth_sets, "Override one setting (key=value), repeatable");
  cmd_synth->add_option("--seed", synth_seed, "Random seed");
  cmd_synth->add_option("--out-dir", synth_out, "Output directory")->required();

  std::string sweep_labels, sweep_strengths = "0,0.5,1,2", sweep_smooth = "0,1,2", sweep_out, sweep_config;
  std::string sweep_classes = "J3";
  std::vector<std::string> sweep_sets;
  int sweep_seeds = 20;
  int sweep_iters = 200;
  std::optional<std::uint64_t> sweep_base_seed;
  auto* cmd_sweep = app.add_subcommand("sweep", "Dice over a grid of deformation strength and smoothness");
  cmd_sweep->add_option("--labels-dir", sweep_labels, "Directory of label maps (or one file)")->required();
  cmd_sweep->add_option("--strengths", sweep_strengths, "Comma-separated deformation strengths");
  cmd_sweep->add_option("--smoothness", sweep_smooth, "Comma-separated smoothness levels");
  cmd_sweep->add_option("--seeds", sweep_seeds, "Seeds per cell")->check(CLI::PositiveNumber);
  cmd_sweep->add_option("--seed", sweep_base_seed, "First seed");
  cmd_sweep->add_option("--config", sweep_config, "key = value synthesis settings");
  cmd_sweep->add_option("--set", sweep_sets, "Override one synthesis setting (key=value)");
  cmd_sweep->add_option("--refine-iters", sweep_iters, "MSE refinement iterations")->check(CLI::PositiveNumber);
  cmd_sweep->add_option("--classes", sweep_classes, "J3, J5 or a merge table file");
  cmd_sweep->add_option("-o,--out", sweep_out, "Output TSV")->required();

  std::string phantom_out, phantom_image;
  std::int64_t phantom_size = 64;
  double phantom_voxel = 2.0;
  auto* cmd_phantom = app.add_subcommand("phantom", "Write the built-in brain phantom");
  cmd_phantom->add_option("-o,--out", phantom_out, "Output label map")->required();
  cmd_phantom->add_option("--image", phantom_image, "Also write a smooth intensity image");
  cmd_phantom->add_option("--size", phantom_size, "Voxels per side")->check(CLI::Range(8, 1024));
  cmd_phantom->add_option("--voxel", phantom_voxel, "Voxel size (mm)")->check(CLI::PositiveNumber);

  std::string batch_manifest;
  int batch_jobs = 1;
  RegisterArgs batch_reg;
  auto* cmd_batch = app.add_subcommand("batch", "Register every pair listed in a manifest");
  cmd_batch->add_option("--manifest", batch_manifest, "Tab-separated manifest")->required();
  cmd_batch->add_option("--jobs", batch_jobs, "Worker threads")->check(CLI::PositiveNumber);
  add_register_options(cmd_batch, batch_reg, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*cmd_register) {
      run_register(reg);
    } else if (*cmd_apply) {
      run_apply(apply);
    } else if (*cmd_eval) {
      const MergeTable table = MergeTable::from_spec(eval_classes);
      const LabelMap moved = merge_classes(read_labels(eval_moved), table);
      const LabelMap fixed = merge_classes(read_labels(eval_fixed), table);
      const auto classes = table.classes();
      const std::string tsv = dice_tsv(dice_scores(moved, fixed, classes), classes);
      if (eval_out.empty()) {
        std::cout << tsv;
      } else {
        write_text(eval_out, tsv);
      }
    } else if (*cmd_synth) {
      SynthConfig cfg;
      apply_settings(cfg, synth_config, synth_sets);
      if (synth_seed) cfg.seed = *synth_seed;
      if (auto s = env_seed()) cfg.seed = *s;
      const TrainingPair pair = make_pair(read_labels(synth_labels), cfg);
      const fs::path dir = synth_out;
      fs::create_directories(dir);
      write_volume(dir / "moving_image.nii.gz", pair.moving_image);
      write_volume(dir / "fixed_image.nii.gz", pair.fixed_image);
      write_labels(dir / "moving_labels.nii.gz", pair.moving_labels);
      write_labels(dir / "fixed_labels.nii.gz", pair.fixed_labels);
      write_transform(dir / "true_rigid.txt", pair.true_rigid);
      write_text(dir / "manifest.tsv", pair_manifest(cfg));
    } else if (*cmd_sweep) {
      SweepOptions opt;
      opt.strengths = parse_list(sweep_strengths);
      opt.smoothness = parse_list(sweep_smooth);
      opt.base.same_contrast = true;
      apply_settings(opt.base, sweep_config, sweep_sets);
      std::uint64_t first = sweep_base_seed.value_or(opt.base.seed);
      if (auto s = env_seed()) first = *s;
      for (int i = 0; i < sweep_seeds; ++i) opt.seeds.push_back(first + static_cast<std::uint64_t>(i));
      opt.registration.conform = false;
      opt.registration.refine = true;
      opt.registration.refine_config.iterations = sweep_iters;
      opt.registration.classes = MergeTable::from_spec(sweep_classes);
      const auto cells = run_sweep(load_label_dir(sweep_labels), opt);
      write_text(sweep_out, format_sweep_tsv(cells));
    } else if (*cmd_phantom) {
      write_labels(phantom_out, make_brain_phantom(phantom_size, phantom_voxel));
      if (!phantom_image.empty()) write_volume(phantom_image, make_smooth_phantom(phantom_size, phantom_voxel));
    } else if (*cmd_batch) {
      return run_batch(batch_manifest, batch_jobs, batch_reg);
    }
  } catch (const Error& e) {
    std::cerr << "longreg: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "longreg: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
