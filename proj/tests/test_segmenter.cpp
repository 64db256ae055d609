#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "promptforge/segmenter.hpp"
#include "test_support.hpp"

using namespace promptforge;

namespace {

constexpr auto Pos = PromptClass::Positive;
constexpr auto Neg = PromptClass::Negative;
constexpr auto Hard = PromptClass::HardNegative;

void write_script(const std::filesystem::path& path, const std::string& body) {
  std::ofstream(path) << "#!/bin/sh\n" << body;
  std::filesystem::permissions(path, std::filesystem::perms::owner_all);
}

// Workdir with an image and an adapter running `body` as adapter.sh.
struct AdapterFixture {
  TempDir dir;
  std::filesystem::path image;
  SegmenterAdapter adapter;

  explicit AdapterFixture(const std::string& body, std::chrono::milliseconds timeout = std::chrono::seconds(20)) {
    image = dir / "image.pgm";
    save_gray(GrayImage{4, 3, std::vector<std::uint8_t>(12, 7)}, image);
    write_script(dir / "adapter.sh", body);
    adapter = {"sh ./adapter.sh {image} {scheme} {out}", dir.path(), timeout};
  }
};

const PromptScheme kScheme4x3{4, 3, {{0, 0, Pos}, {3, 2, Neg}}};

}  // namespace

TEST(BaselineSegment, SplitsLineAtMidpoint) {
  const PromptScheme s{10, 1, {{0, 0, Pos}, {9, 0, Neg}}};
  const auto m = baseline_segment(s);
  for (int x = 0; x < 10; ++x) EXPECT_EQ(m.at(x, 0), x <= 4 ? 1 : 0) << x;
}

TEST(BaselineSegment, TiesGoToBackground) {
  const PromptScheme s{3, 1, {{0, 0, Pos}, {2, 0, Neg}}};
  const auto m = baseline_segment(s);
  EXPECT_EQ(m.data, (std::vector<std::uint8_t>{1, 0, 0}));
}

TEST(BaselineSegment, PositivesOnlyFillsImage) {
  const auto m = baseline_segment(PromptScheme{5, 4, {{2, 2, Pos}}});
  EXPECT_EQ(std::count(m.data.begin(), m.data.end(), 1), 20);
}

TEST(BaselineSegment, HalfPlane) {
  const PromptScheme s{20, 20, {{5, 10, Pos}, {14, 10, Neg}}};
  const auto m = baseline_segment(s);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) EXPECT_EQ(m.at(x, y), x < 10 ? 1 : 0);
}

TEST(BaselineSegment, HardNegativeActsAsNegative) {
  const PromptScheme a{10, 1, {{0, 0, Pos}, {9, 0, Neg}}};
  const PromptScheme b{10, 1, {{0, 0, Pos}, {9, 0, Hard}}};
  EXPECT_EQ(baseline_segment(a).data, baseline_segment(b).data);
}

TEST(BaselineSegment, MatchesBruteForceAndIgnoresOrder) {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    PromptScheme s{33, 21, {}};
    s.add({static_cast<int>(rng() % 33), static_cast<int>(rng() % 21), Pos});
    for (int i = 0; i < 8; ++i)
      s.add({static_cast<int>(rng() % 33), static_cast<int>(rng() % 21), kAllPromptClasses[rng() % 3]});
    const auto m = baseline_segment(s);
    for (int y = 0; y < 21; ++y)
      for (int x = 0; x < 33; ++x) {
        double best_pos = 1e18, best_neg = 1e18;
        for (const auto& p : s.points) {
          const double d = std::hypot(x - p.x, y - p.y);
          (p.cls == Pos ? best_pos : best_neg) = std::min(p.cls == Pos ? best_pos : best_neg, d);
        }
        EXPECT_EQ(m.at(x, y), best_pos < best_neg ? 1 : 0);
      }
    auto shuffled = s;
    std::shuffle(shuffled.points.begin(), shuffled.points.end(), rng);
    EXPECT_EQ(baseline_segment(shuffled).data, m.data);
  }
}

TEST(BaselineSegment, AddingPromptsMovesMaskMonotonically) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    PromptScheme s{24, 24, {{static_cast<int>(rng() % 24), static_cast<int>(rng() % 24), Pos},
                            {static_cast<int>(rng() % 24), static_cast<int>(rng() % 24), Neg}}};
    const auto base = baseline_segment(s);
    auto grown = s;
    grown.points.push_back({static_cast<int>(rng() % 24), static_cast<int>(rng() % 24), Pos});
    auto shrunk = s;
    shrunk.points.push_back({static_cast<int>(rng() % 24), static_cast<int>(rng() % 24), Neg});
    const auto g = baseline_segment(grown);
    const auto k = baseline_segment(shrunk);
    for (std::size_t i = 0; i < base.data.size(); ++i) {
      EXPECT_GE(g.data[i], base.data[i]);
      EXPECT_LE(k.data[i], base.data[i]);
    }
  }
}

TEST(BaselineSegment, NeedsPositive) {
  EXPECT_PF_ERROR(baseline_segment(PromptScheme{4, 4, {{1, 1, Neg}}}), ErrorKind::NoPositivePrompt);
}

TEST(ExternalSegment, ReadsMaskWrittenByCommand) {
  AdapterFixture fx("printf 'P5\\n4 3\\n255\\n' > \"$3\"\n"
                    "printf '\\377\\000\\000\\000\\000\\000\\000\\000\\000\\000\\000\\377' >> \"$3\"\n"
                    "test -s \"$2\" && test -f \"$1\"\n");
  const auto m = external_segment(fx.adapter, fx.image, kScheme4x3);
  EXPECT_EQ(m.width, 4);
  EXPECT_EQ(m.data, (std::vector<std::uint8_t>{1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1}));
  EXPECT_EQ(load_prompt_scheme(fx.dir / "scheme.json"), kScheme4x3);
}

TEST(ExternalSegment, NonzeroExitCarriesStderr) {
  AdapterFixture fx("echo model exploded >&2\nexit 1\n");
  try {
    external_segment(fx.adapter, fx.image, kScheme4x3);
    FAIL() << "expected failure";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ExternalFailure);
    EXPECT_NE(std::string(e.what()).find("model exploded"), std::string::npos);
  }
}

TEST(ExternalSegment, WrongSizeMask) {
  AdapterFixture fx("printf 'P5\\n2 2\\n255\\n\\000\\000\\000\\000' > \"$3\"\n");
  EXPECT_PF_ERROR(external_segment(fx.adapter, fx.image, kScheme4x3), ErrorKind::DimensionMismatch);
}

TEST(ExternalSegment, MissingOutput) {
  AdapterFixture fx("exit 0\n");
  EXPECT_PF_ERROR(external_segment(fx.adapter, fx.image, kScheme4x3), ErrorKind::MissingOutput);
}

TEST(ExternalSegment, MalformedOutput) {
  AdapterFixture fx("echo not a pgm > \"$3\"\n");
  EXPECT_PF_ERROR(external_segment(fx.adapter, fx.image, kScheme4x3), ErrorKind::MalformedOutput);
}

TEST(ExternalSegment, TimeoutKillsProcessGroup) {
  AdapterFixture fx("sleep 30 &\nsleep 30\n", std::chrono::milliseconds(300));
  const auto start = std::chrono::steady_clock::now();
  EXPECT_PF_ERROR(external_segment(fx.adapter, fx.image, kScheme4x3), ErrorKind::Timeout);
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(10));
}

TEST(ExternalSegment, MissingImage) {
  AdapterFixture fx("exit 0\n");
  EXPECT_PF_ERROR(external_segment(fx.adapter, fx.dir / "nope.pgm", kScheme4x3), ErrorKind::Io);
}

TEST(Adapter, PlaceholdersRequired) {
  EXPECT_PF_ERROR(check_adapter({"run {image} {out}", ".", std::chrono::seconds(1)}), ErrorKind::InvalidConfig);
  EXPECT_NO_THROW(check_adapter({"run {image} {scheme} {out}", ".", std::chrono::seconds(1)}));
}

TEST(Adapter, LoadFromFile) {
  TempDir dir;
  std::ofstream(dir / "seg.adapter") << "# external model\ncommand = python run.py {image} {scheme} {out}\n"
                                        "workdir = work\ntimeout = 2.5\n";
  const auto a = load_adapter(dir / "seg.adapter");
  EXPECT_EQ(a.invocation, "python run.py {image} {scheme} {out}");
  EXPECT_EQ(a.workdir, dir.path() / "work");
  EXPECT_EQ(a.timeout, std::chrono::milliseconds(2500));

  std::ofstream(dir / "bad.adapter") << "command = run {image}\n";
  EXPECT_PF_ERROR(load_adapter(dir / "bad.adapter"), ErrorKind::InvalidConfig);
  std::ofstream(dir / "typo.adapter") << "comand = run {image} {scheme} {out}\n";
  EXPECT_PF_ERROR(load_adapter(dir / "typo.adapter"), ErrorKind::InvalidConfig);
}

TEST(Segmenter, ParseSpec) {
  EXPECT_FALSE(parse_segmenter("baseline").adapter.has_value());
  EXPECT_PF_ERROR(parse_segmenter("sam"), ErrorKind::InvalidArgument);
  EXPECT_PF_ERROR(parse_segmenter("adapter:/nonexistent/x.adapter"), ErrorKind::Io);
}

TEST(RunShell, CapturesStreamsAndExitCode) {
  TempDir dir;
  const auto r = run_shell("echo out; echo err >&2; exit 3", dir.path(), std::chrono::seconds(10));
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_FALSE(r.timed_out);
  EXPECT_EQ(r.stdout_text, "out\n");
  EXPECT_EQ(r.stderr_text, "err\n");
}
