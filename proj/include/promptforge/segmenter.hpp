#pragma once

#include <fcntl.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "promptforge/error.hpp"
#include "promptforge/log.hpp"
#include "promptforge/pipeline.hpp"
#include "promptforge/prompt.hpp"
#include "promptforge/tensor_io.hpp"

namespace promptforge {

/// Nearest-prompt labeling: a pixel is foreground iff its closest prompt point
/// is Positive. Equidistant pixels go to background; HardNegative is a negative.
inline MaskImage baseline_segment(const PromptScheme& scheme) {
  if (scheme.count(PromptClass::Positive) == 0) {
    throw Error(ErrorKind::NoPositivePrompt, "baseline segmenter needs at least one positive");
  }
  if (scheme.image_width < 1 || scheme.image_height < 1) {
    throw Error(ErrorKind::InvalidArgument, "scheme has no image size");
  }
  std::vector<PromptPoint> pos;
  std::vector<PromptPoint> neg;
  for (const auto& p : scheme.points) (p.cls == PromptClass::Positive ? pos : neg).push_back(p);

  MaskImage mask(scheme.image_width, scheme.image_height);
  auto nearest = [](const std::vector<PromptPoint>& pts, std::int64_t x, std::int64_t y) {
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    for (const auto& p : pts) {
      const std::int64_t dx = x - p.x;
      const std::int64_t dy = y - p.y;
      best = std::min(best, dx * dx + dy * dy);
    }
    return best;
  };
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      mask.at(x, y) = nearest(pos, x, y) < nearest(neg, x, y) ? 1 : 0;
    }
  }
  return mask;
}

// ---------------------------------------------------------------------------
// External adapter
// ---------------------------------------------------------------------------

/// An external promptable segmenter reached through a shell command. The
/// template must contain {image}, {scheme} and {out}; the command writes a P5
/// PGM mask to {out} and exits 0.
struct SegmenterAdapter {
  std::string invocation;
  std::filesystem::path workdir;
  std::chrono::milliseconds timeout{std::chrono::seconds(120)};
};

inline void check_adapter(const SegmenterAdapter& adapter) {
  for (const char* placeholder : {"{image}", "{scheme}", "{out}"}) {
    if (adapter.invocation.find(placeholder) == std::string::npos) {
      throw Error(ErrorKind::InvalidConfig,
                  std::string("adapter command lacks placeholder ") + placeholder);
    }
  }
  if (adapter.timeout.count() <= 0) throw Error(ErrorKind::InvalidConfig, "adapter timeout must be > 0");
}

/// Reads an adapter description: key=value lines with keys command, workdir and
/// timeout (seconds). workdir defaults to the file's directory.
inline SegmenterAdapter load_adapter(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open adapter file " + path.string());
  SegmenterAdapter adapter;
  adapter.workdir = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
  std::string line;
  while (std::getline(in, line)) {
    const auto trimmed = detail::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::InvalidConfig, "adapter file: expected key=value");
    }
    const auto key = detail::trim(trimmed.substr(0, eq));
    const auto value = detail::trim(trimmed.substr(eq + 1));
    if (key == "command") {
      adapter.invocation = std::string(value);
    } else if (key == "workdir") {
      adapter.workdir = std::filesystem::path(std::string(value));
      if (adapter.workdir.is_relative()) adapter.workdir = path.parent_path() / adapter.workdir;
    } else if (key == "timeout") {
      adapter.timeout = std::chrono::milliseconds(
          static_cast<long long>(detail::parse_fraction(key, value) * 1000.0));
    } else {
      throw Error(ErrorKind::InvalidConfig, "adapter file: unknown key '" + std::string(key) + "'");
    }
  }
  check_adapter(adapter);
  return adapter;
}

struct ProcessResult {
  int exit_code = -1;
  bool timed_out = false;
  std::string stdout_text;
  std::string stderr_text;
};

namespace detail {

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

inline void replace_all(std::string& s, std::string_view from, const std::string& to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline std::mutex& workdir_mutex(const std::filesystem::path& workdir) {
  static std::mutex registry_mutex;
  static std::map<std::string, std::unique_ptr<std::mutex>> registry;
  std::lock_guard lock(registry_mutex);
  auto& slot = registry[std::filesystem::weakly_canonical(workdir).string()];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

}  // namespace detail

/// Runs `command` through /bin/sh in `workdir`, capturing stdout and stderr.
/// The whole process group is killed when `timeout` elapses.
inline ProcessResult run_shell(const std::string& command, const std::filesystem::path& workdir,
                               std::chrono::milliseconds timeout) {
  std::filesystem::create_directories(workdir);
  const auto tag = std::to_string(::getpid()) + "-" +
                   std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  const auto out_path = workdir / (".pf-stdout-" + tag);
  const auto err_path = workdir / (".pf-stderr-" + tag);

  const pid_t pid = ::fork();
  if (pid < 0) throw Error(ErrorKind::ExternalFailure, "fork failed");
  if (pid == 0) {
    ::setpgid(0, 0);
    if (::chdir(workdir.c_str()) != 0) ::_exit(126);
    const int out_fd = ::open(out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    const int err_fd = ::open(err_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (out_fd < 0 || err_fd < 0) ::_exit(126);
    ::dup2(out_fd, STDOUT_FILENO);
    ::dup2(err_fd, STDERR_FILENO);
    const int null_fd = ::open("/dev/null", O_RDONLY);
    if (null_fd >= 0) ::dup2(null_fd, STDIN_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::setpgid(pid, pid);

  ProcessResult result;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  int status = 0;
  while (true) {
    const pid_t done = ::waitpid(pid, &status, WNOHANG);
    if (done == pid) break;
    if (done < 0) throw Error(ErrorKind::ExternalFailure, "waitpid failed");
    if (std::chrono::steady_clock::now() >= deadline) {
      ::kill(-pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      result.timed_out = true;
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  if (!result.timed_out) {
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  }
  result.stdout_text = detail::slurp(out_path);
  result.stderr_text = detail::slurp(err_path);
  std::error_code ec;
  std::filesystem::remove(out_path, ec);
  std::filesystem::remove(err_path, ec);
  return result;
}

/// Hands the scheme to an external segmenter and reads back its mask. The mask
/// content is not interpreted beyond format and size validation.
inline MaskImage external_segment(const SegmenterAdapter& adapter,
                                  const std::filesystem::path& image_path,
                                  const PromptScheme& scheme) {
  check_adapter(adapter);
  if (!std::filesystem::exists(image_path)) {
    throw Error(ErrorKind::Io, "image not found: " + image_path.string());
  }
  std::lock_guard lock(detail::workdir_mutex(adapter.workdir));
  std::filesystem::create_directories(adapter.workdir);
  const auto workdir = std::filesystem::absolute(adapter.workdir);
  const auto scheme_path = workdir / "scheme.json";
  const auto out_path = workdir / "mask.pgm";
  std::error_code ec;
  std::filesystem::remove(out_path, ec);
  save_prompt_scheme(scheme, scheme_path);

  std::string command = adapter.invocation;
  detail::replace_all(command, "{image}", detail::shell_quote(std::filesystem::absolute(image_path).string()));
  detail::replace_all(command, "{scheme}", detail::shell_quote(scheme_path.string()));
  detail::replace_all(command, "{out}", detail::shell_quote(out_path.string()));
  log::debug("adapter: " + command);

  const auto run = run_shell(command, workdir, adapter.timeout);
  if (!run.stdout_text.empty()) log::debug("adapter stdout: " + run.stdout_text);
  if (!run.stderr_text.empty()) log::debug("adapter stderr: " + run.stderr_text);
  if (run.timed_out) {
    throw Error(ErrorKind::Timeout, "adapter exceeded " + std::to_string(adapter.timeout.count()) + " ms");
  }
  if (run.exit_code != 0) {
    throw Error(ErrorKind::ExternalFailure,
                "adapter exited " + std::to_string(run.exit_code) + ": " + run.stderr_text);
  }
  if (!std::filesystem::exists(out_path)) {
    throw Error(ErrorKind::MissingOutput, "adapter wrote no mask at " + out_path.string());
  }
  MaskImage mask;
  try {
    mask = load_mask(out_path);
  } catch (const Error& e) {
    throw Error(ErrorKind::MalformedOutput, std::string("adapter mask: ") + e.what());
  }
  if (mask.width != scheme.image_width || mask.height != scheme.image_height) {
    throw Error(ErrorKind::DimensionMismatch,
                "adapter mask " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                    " vs scheme " + std::to_string(scheme.image_width) + "x" +
                    std::to_string(scheme.image_height));
  }
  return mask;
}

/// Either the built-in baseline or an external adapter.
struct Segmenter {
  std::optional<SegmenterAdapter> adapter;

  std::string name() const { return adapter ? "adapter" : "baseline"; }

  MaskImage segment(const PromptScheme& scheme, const std::filesystem::path& image_path = {}) const {
    if (!adapter) return baseline_segment(scheme);
    return external_segment(*adapter, image_path, scheme);
  }
};

/// Parses "baseline" or "adapter:<file>".
inline Segmenter parse_segmenter(std::string_view spec) {
  if (spec == "baseline") return {};
  if (spec.starts_with("adapter:")) {
    return Segmenter{load_adapter(std::filesystem::path(std::string(spec.substr(8))))};
  }
  throw Error(ErrorKind::InvalidArgument, "segmenter must be 'baseline' or 'adapter:<file>'");
}

}  // namespace promptforge
