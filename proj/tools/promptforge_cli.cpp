// promptforge: one-shot point-prompt engineering from the command line.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "promptforge/promptforge.hpp"

namespace fs = std::filesystem;
using namespace promptforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::optional<std::pair<int, int>> parse_size(const std::string& text) {
  if (text.empty()) return std::nullopt;
  int w = 0, h = 0;
  char sep = 0;
  if (std::sscanf(text.c_str(), "%d%c%d", &w, &sep, &h) != 3 || (sep != 'x' && sep != 'X') || w < 1 || h < 1) {
    throw UsageError("--target-size must look like WIDTHxHEIGHT");
  }
  return std::pair{w, h};
}

PipelineConfig config_or_default(const std::string& path) {
  return path.empty() ? PipelineConfig{} : load_config(path);
}

void require_valid(const PipelineConfig& config) {
  const auto violations = validate_config(config);
  if (violations.empty()) return;
  std::string msg = "invalid config:";
  for (const auto& v : violations) msg += "\n  " + v.field + ": " + v.rule;
  throw Error(ErrorKind::InvalidConfig, msg);
}

std::vector<NamedSegmenter> parse_segmenters(const std::vector<std::string>& specs) {
  std::vector<NamedSegmenter> out;
  for (const auto& spec : specs.empty() ? std::vector<std::string>{"baseline"} : specs) {
    auto seg = parse_segmenter(spec);
    const auto tag = spec == "baseline" ? std::string("baseline") : fs::path(spec.substr(8)).stem().string();
    out.push_back({tag, std::move(seg)});
  }
  return out;
}

std::vector<SweepConfig> grid_from(const std::string& grid) {
  if (grid.rfind("builtin:", 0) == 0) {
    auto builtin = builtin_grid(grid.substr(8));
    if (!builtin) throw UsageError("unknown builtin grid '" + grid.substr(8) + "'");
    return *builtin;
  }
  return load_grid(grid);
}

struct PromptInputs {
  std::string ref_features;
  std::string ref_mask;
  std::string target_features;
  std::string target_size;
  std::string config;
};

void add_prompt_inputs(CLI::App* cmd, PromptInputs& in) {
  cmd->add_option("--ref-features", in.ref_features, "Reference patch features (FPT)")->required();
  cmd->add_option("--ref-mask", in.ref_mask, "Reference mask (PGM)")->required();
  cmd->add_option("--target-features", in.target_features, "Target patch features (FPT)")->required();
  cmd->add_option("--target-size", in.target_size, "Target image size WxH (default: grid sidecar or feature grid)");
  cmd->add_option("--config", in.config, "Pipeline config (key=value)");
}

PipelineResult run_from_inputs(const PromptInputs& in) {
  const auto config = config_or_default(in.config);
  require_valid(config);
  const auto mask = load_mask(in.ref_mask);
  const auto ref = load_feature_map(in.ref_features, std::pair{mask.width, mask.height},
                                    config.patch_size, config.stride);
  const auto target = load_feature_map(in.target_features, parse_size(in.target_size),
                                       config.patch_size, config.stride);
  return run_pipeline(ref, mask, target, target.grid.image_width, target.grid.image_height, config);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

GrayImage overlay(const GrayImage& base, const std::vector<PromptPoint>& points) {
  GrayImage img = base;
  auto put = [&](int x, int y, std::uint8_t v) {
    if (x >= 0 && y >= 0 && x < img.width && y < img.height) img.at(x, y) = v;
  };
  for (const auto& p : points) {
    for (int d = -2; d <= 2; ++d) {
      for (int e = -2; e <= 2; ++e) {
        switch (p.cls) {
          case PromptClass::Positive: put(p.x + d, p.y + e, 255); break;
          case PromptClass::Negative: put(p.x + d, p.y + e, 0); break;
          case PromptClass::HardNegative:
            if (d == e || d == -e) put(p.x + d, p.y + e, 0);
            break;
        }
      }
    }
  }
  return img;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"promptforge: one-shot reference-guided point prompts for promptable segmenters"};
  app.require_subcommand(1);

  PromptInputs prompt_in;
  std::string prompt_out, prompt_trace;
  auto* prompt = app.add_subcommand("prompt", "Generate a prompt scheme for a target image");
  add_prompt_inputs(prompt, prompt_in);
  prompt->add_option("--out", prompt_out, "Output scheme JSON")->required();
  prompt->add_option("--trace-out", prompt_trace, "Output trace JSON (default: <out>.trace.json)");

  std::string seg_scheme, seg_out, seg_image, seg_segmenter = "baseline";
  auto* segment = app.add_subcommand("segment", "Segment from a prompt scheme");
  segment->add_option("--scheme", seg_scheme, "Prompt scheme JSON")->required();
  segment->add_option("--out", seg_out, "Output mask (PGM)")->required();
  segment->add_option("--image", seg_image, "Target image passed to an adapter");
  segment->add_option("--segmenter", seg_segmenter, "baseline | adapter:<file>");

  std::string eval_pred, eval_truth, eval_manifest, eval_config, eval_out;
  std::vector<std::string> eval_segmenters;
  unsigned eval_jobs = 1;
  auto* eval = app.add_subcommand("eval", "Dice of a mask pair, or of one config over a manifest");
  eval->add_option("--pred", eval_pred, "Predicted mask (PGM)");
  eval->add_option("--truth", eval_truth, "Ground-truth mask (PGM)");
  eval->add_option("--manifest", eval_manifest, "Dataset manifest JSON");
  eval->add_option("--config", eval_config, "Pipeline config (key=value)");
  eval->add_option("--segmenter", eval_segmenters, "baseline | adapter:<file> (repeatable)");
  eval->add_option("--out", eval_out, "Per-case CSV output (default stdout)");
  eval->add_option("--jobs", eval_jobs, "Worker threads")->check(CLI::PositiveNumber);

  std::string sw_manifest, sw_grid, sw_out;
  std::vector<std::string> sw_segmenters;
  unsigned sw_jobs = 1;
  SynthSpec sw_synth;
  std::size_t sw_synth_cases = 0;
  auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate a config grid and write a CSV report");
  sweep_cmd->add_option("--manifest", sw_manifest, "Dataset manifest JSON");
  sweep_cmd->add_option("--synth", sw_synth_cases, "Use N synthetic cases instead of a manifest");
  sweep_cmd->add_option("--seed", sw_synth.seed, "Synthetic seed");
  sweep_cmd->add_option("--noise-ratio", sw_synth.noise_ratio, "Synthetic noise sigma / cluster separation");
  sweep_cmd->add_option("--feature-dim", sw_synth.feature_dim, "Synthetic feature dimension");
  sweep_cmd->add_option("--grid", sw_grid, "Grid file or builtin:ablation|exclusive|sparse|negative")->required();
  sweep_cmd->add_option("--segmenter", sw_segmenters, "baseline | adapter:<file> (repeatable)");
  sweep_cmd->add_option("--out", sw_out, "Output CSV")->required();
  sweep_cmd->add_option("--jobs", sw_jobs, "Worker threads")->check(CLI::PositiveNumber);

  SynthSpec synth_spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write synthetic fixtures and a manifest");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--cases", synth_spec.cases, "Number of cases");
  synth->add_option("--seed", synth_spec.seed, "Seed");
  synth->add_option("--width", synth_spec.width, "Image width");
  synth->add_option("--height", synth_spec.height, "Image height");
  synth->add_option("--patch-size", synth_spec.patch_size, "Patch size");
  synth->add_option("--stride", synth_spec.stride, "Stride");
  synth->add_option("--feature-dim", synth_spec.feature_dim, "Feature dimension");
  synth->add_option("--noise-ratio", synth_spec.noise_ratio, "Noise sigma / cluster separation");

  PromptInputs trace_in;
  std::string trace_out, trace_image;
  auto* trace = app.add_subcommand("trace", "Write per-stage overlay PGMs and the trace JSON");
  add_prompt_inputs(trace, trace_in);
  trace->add_option("--out", trace_out, "Output directory")->required();
  trace->add_option("--image", trace_image, "Target image (PGM) to draw on");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*prompt) {
      const auto result = run_from_inputs(prompt_in);
      const fs::path out = prompt_out;
      const fs::path trace_path = prompt_trace.empty() ? fs::path(prompt_out + ".trace.json") : fs::path(prompt_trace);
      save_prompt_scheme(result.scheme, out);
      write_text(trace_path, trace_to_json(result.trace).dump(2) + "\n");
      log::info("wrote " + out.string());
    } else if (*segment) {
      const auto scheme = load_prompt_scheme(seg_scheme);
      const auto seg = parse_segmenter(seg_segmenter);
      save_mask(seg.segment(scheme, seg_image), seg_out);
    } else if (*eval) {
      if (!eval_pred.empty() || !eval_truth.empty()) {
        if (eval_pred.empty() || eval_truth.empty() || !eval_manifest.empty()) {
          throw UsageError("eval takes either --pred with --truth, or --manifest");
        }
        std::cout << format_dsc(dice(load_mask(eval_pred), load_mask(eval_truth))) << "\n";
      } else {
        if (eval_manifest.empty()) throw UsageError("eval needs --pred/--truth or --manifest");
        const auto config = config_or_default(eval_config);
        require_valid(config);
        std::vector<CaseSource> cases;
        for (auto& e : load_manifest(eval_manifest)) cases.emplace_back(std::move(e));
        const auto result = sweep({{"config", config}}, cases, parse_segmenters(eval_segmenters), eval_jobs);
        if (result.successes() == 0) throw Error(ErrorKind::ExternalFailure, "no case succeeded");
        std::string csv = "segmenter,case_id,dsc\n";
        for (const auto& rec : result.records) {
          for (std::size_t i = 0; i < rec.dsc.size(); ++i) {
            csv += rec.segmenter_tag + "," + rec.case_ids[i] + "," + format_dsc(rec.dsc[i]) + "\n";
          }
          csv += rec.segmenter_tag + ",mean," + format_dsc(rec.mean) + "\n";
        }
        if (eval_out.empty()) std::cout << csv;
        else write_text(eval_out, csv);
      }
    } else if (*sweep_cmd) {
      if (sw_manifest.empty() == (sw_synth_cases == 0)) {
        throw UsageError("sweep needs exactly one of --manifest or --synth N");
      }
      const auto grid = grid_from(sw_grid);
      for (const auto& c : grid) require_valid(c.config);
      std::vector<CaseSource> cases;
      if (!sw_manifest.empty()) {
        for (auto& e : load_manifest(sw_manifest)) cases.emplace_back(std::move(e));
      } else {
        sw_synth.cases = sw_synth_cases;
        for (auto& c : make_synthetic_suite(sw_synth)) cases.emplace_back(std::move(c));
      }
      const auto result = sweep(grid, cases, parse_segmenters(sw_segmenters), sw_jobs);
      if (result.successes() == 0) {
        throw Error(ErrorKind::ExternalFailure,
                    "no case succeeded; first failure: " +
                        (result.records.front().failures.empty() ? std::string("?") : result.records.front().failures.front()));
      }
      write_text(sw_out, sweep_csv(result));
    } else if (*synth) {
      if (synth_spec.cases == 0) throw UsageError("--cases must be >= 1");
      const auto cases = make_synthetic_suite(synth_spec);
      for (const auto& c : cases) generate_synthetic(c);  // validate before writing anything
      write_synthetic_suite(cases, synth_out);
    } else if (*trace) {
      const auto result = run_from_inputs(trace_in);
      const fs::path dir = trace_out;
      GrayImage base;
      if (!trace_image.empty()) {
        base = load_gray(trace_image);
        if (base.width != result.scheme.image_width || base.height != result.scheme.image_height) {
          throw Error(ErrorKind::DimensionMismatch, "--image size differs from the target grid");
        }
      } else {
        base = GrayImage{result.scheme.image_width, result.scheme.image_height,
                         std::vector<std::uint8_t>(static_cast<std::size_t>(result.scheme.image_width) *
                                                       result.scheme.image_height, 128)};
      }
      fs::create_directories(dir);
      for (std::size_t i = 0; i < result.trace.stages.size(); ++i) {
        const auto& stage = result.trace.stages[i];
        save_gray(overlay(base, stage.points_after), dir / (std::to_string(i) + "_" + stage.stage + ".pgm"));
      }
      write_text(dir / "trace.json", trace_to_json(result.trace).dump(2) + "\n");
      save_prompt_scheme(result.scheme, dir / "scheme.json");
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}
