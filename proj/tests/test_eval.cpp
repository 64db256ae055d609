#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "promptforge/eval.hpp"
#include "test_support.hpp"

using namespace promptforge;

namespace {

MaskImage mask_of(int w, int h, std::vector<std::uint8_t> data) {
  MaskImage m(w, h);
  m.data = std::move(data);
  return m;
}

SyntheticCase simple_case(double sigma = 0.0) {
  SyntheticCase c;
  c.seed = 5;
  c.noise_sigma = sigma;
  c.ref_objects = {{ObjectShape::Kind::Ellipse, 70, 80, 40, 30}};
  c.target_objects = {{ObjectShape::Kind::Rectangle, 90, 70, 30, 40}};
  return c;
}

double l2(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (double(a[k]) - b[k]) * (double(a[k]) - b[k]);
  return std::sqrt(s);
}

std::vector<CaseSource> synth_sources(std::size_t n, double noise_ratio = 0.5) {
  SynthSpec spec;
  spec.cases = n;
  spec.noise_ratio = noise_ratio;
  std::vector<CaseSource> out;
  for (auto& c : make_synthetic_suite(spec)) out.emplace_back(c);
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted && c == '"' && i + 1 < line.size() && line[i + 1] == '"') fields.back() += line[++i];
    else if (c == '"') quoted = !quoted;
    else if (c == ',' && !quoted) fields.emplace_back();
    else fields.back() += c;
  }
  return fields;
}

const std::vector<NamedSegmenter> kBaseline{{"baseline", Segmenter{}}};

}  // namespace

TEST(Dice, Examples) {
  const auto a = mask_of(2, 2, {1, 1, 0, 0});
  EXPECT_DOUBLE_EQ(dice(a, a), 1.0);
  EXPECT_DOUBLE_EQ(dice(a, mask_of(2, 2, {0, 0, 1, 1})), 0.0);
  const auto p = mask_of(4, 2, {1, 1, 1, 1, 0, 0, 0, 0});
  const auto t = mask_of(4, 2, {0, 0, 1, 1, 1, 1, 0, 0});
  EXPECT_DOUBLE_EQ(dice(p, t), 0.5);
  EXPECT_DOUBLE_EQ(dice(MaskImage(3, 3), MaskImage(3, 3)), 1.0);
  EXPECT_DOUBLE_EQ(dice(MaskImage(3, 3), mask_of(3, 3, {0, 0, 0, 0, 1, 0, 0, 0, 0})), 0.0);
}

TEST(Dice, SymmetricAndBounded) {
  std::mt19937 rng(8);
  for (int i = 0; i < 50; ++i) {
    MaskImage a(9, 7), b(9, 7);
    for (auto& v : a.data) v = rng() & 1;
    for (auto& v : b.data) v = rng() % 3 == 0;
    const double d = dice(a, b);
    EXPECT_DOUBLE_EQ(d, dice(b, a));
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
  }
}

TEST(Dice, SizeMismatch) { EXPECT_PF_ERROR(dice(MaskImage(2, 2), MaskImage(2, 3)), ErrorKind::DimensionMismatch); }

TEST(Synthetic, NoiselessFeaturesAreClusterCenters) {
  const auto f = generate_synthetic(simple_case());
  const auto labels = label_reference_patches(f.ref.grid, f.ref_mask);
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == PatchLabel::Positive ? pos : neg) = i;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& same = labels[i] == PatchLabel::Positive ? pos : neg;
    EXPECT_EQ(l2(f.ref.row(i), f.ref.row(same)), 0.0);
  }
  EXPECT_NEAR(l2(f.ref.row(pos), f.ref.row(neg)), 1.0, 1e-6);
  for (float v : f.ref.row(neg)) EXPECT_EQ(v, 0.0f);
}

TEST(Synthetic, ZeroCorrespondenceWithinClassWhenNoiseless) {
  const auto f = generate_synthetic(simple_case());
  const auto m = correspondence_matrix(f.ref, f.target);
  const auto labels = label_reference_patches(f.ref.grid, f.ref_mask);
  for (std::size_t j = 0; j < m.cols; ++j) {
    const auto c = patch_center(f.target.grid, j);
    const bool object = f.target_mask.at(c.x, c.y) != 0;
    for (std::size_t i = 0; i < m.rows; ++i) {
      if ((labels[i] == PatchLabel::Positive) == object) {
        EXPECT_EQ(m.at(i, j), 0.0f);
      }
    }
  }
}

TEST(Synthetic, ClustersStaySeparatedUnderSmallNoise) {
  const auto f = generate_synthetic(simple_case(0.02));
  const auto labels = label_reference_patches(f.ref.grid, f.ref_mask);
  double within = 0, across = 0;
  std::size_t nw = 0, na = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t k = i + 1; k < labels.size(); ++k) {
      const double d = l2(f.ref.row(i), f.ref.row(k));
      if (labels[i] == labels[k]) within += d, ++nw;
      else across += d, ++na;
    }
  within /= static_cast<double>(nw);
  across /= static_cast<double>(na);
  EXPECT_LT(within, 0.2);
  EXPECT_NEAR(across, 1.0, 0.1);
}

TEST(Synthetic, DeterministicPerSeed) {
  const auto a = generate_synthetic(simple_case(0.3));
  const auto b = generate_synthetic(simple_case(0.3));
  EXPECT_EQ(a.ref.features, b.ref.features);
  EXPECT_EQ(a.target.features, b.target.features);
  auto other = simple_case(0.3);
  other.seed = 6;
  EXPECT_NE(generate_synthetic(other).ref.features, a.ref.features);

  SynthSpec spec;
  const auto s1 = make_synthetic_suite(spec);
  const auto s2 = make_synthetic_suite(spec);
  ASSERT_EQ(s1.size(), spec.cases);
  for (std::size_t i = 0; i < s1.size(); ++i) {
    EXPECT_EQ(s1[i].seed, s2[i].seed);
    EXPECT_EQ(s1[i].ref_objects[0].cx, s2[i].ref_objects[0].cx);
  }
}

TEST(Synthetic, DegenerateGeometry) {
  auto c = simple_case();
  c.ref_objects = {{ObjectShape::Kind::Rectangle, 5, 80, 10, 10}};
  EXPECT_PF_ERROR(generate_synthetic(c), ErrorKind::DegenerateGeometry);
  c.ref_objects = {{ObjectShape::Kind::Rectangle, 80, 80, 0, 10}};
  EXPECT_PF_ERROR(generate_synthetic(c), ErrorKind::DegenerateGeometry);
  c.ref_objects = {{ObjectShape::Kind::Rectangle, 80, 80, 78, 78}};  // covers every patch center
  EXPECT_PF_ERROR(generate_synthetic(c), ErrorKind::DegenerateGeometry);
  c = simple_case();
  c.target_objects.clear();
  EXPECT_PF_ERROR(generate_synthetic(c), ErrorKind::DegenerateGeometry);
}

TEST(Synthetic, SuiteRoundTripsThroughManifest) {
  TempDir dir;
  SynthSpec spec;
  spec.cases = 3;
  spec.noise_ratio = 0.2;
  const auto cases = make_synthetic_suite(spec);
  write_synthetic_suite(cases, dir.path());
  const auto entries = load_manifest(dir / "manifest.json");
  ASSERT_EQ(entries.size(), 3u);
  EXPECT_EQ(entries[1].id, "case001");
  const auto from_disk = materialize(entries[1], PipelineConfig{}, 1);
  const auto direct = generate_synthetic(cases[1]);
  EXPECT_EQ(from_disk.ref.features, direct.ref.features);
  EXPECT_EQ(from_disk.target_mask.data, direct.target_mask.data);
  EXPECT_TRUE(std::filesystem::exists(from_disk.target_image));
}

TEST(Manifest, Errors) {
  TempDir dir;
  std::ofstream(dir / "m.json") << R"({"not": "a list"})";
  EXPECT_PF_ERROR(load_manifest(dir / "m.json"), ErrorKind::MalformedInput);
  std::ofstream(dir / "m2.json") << R"([{"ref_features": "a.fpt"}])";
  EXPECT_PF_ERROR(load_manifest(dir / "m2.json"), ErrorKind::MalformedInput);
}

TEST(Sweep, SingleConfigSingleCase) {
  const auto r = sweep({{"default", PipelineConfig{}}}, synth_sources(1), kBaseline);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].dsc.size(), 1u);
  EXPECT_TRUE(r.records[0].failures.empty());
  EXPECT_DOUBLE_EQ(r.records[0].mean, r.records[0].dsc[0]);
}

TEST(Sweep, ExclusiveGridLabels) {
  const auto r = sweep(exclusive_radius_grid(), synth_sources(2), kBaseline);
  const auto csv = sweep_csv(r);
  std::vector<std::string> labels;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line,
            "config_id,stages,d_exclusive,d_sparse_positive,d_sparse_negative,negative_composition,"
            "dsc_baseline,ave,cases_ok,cases_failed,notes");
  while (std::getline(in, line)) labels.push_back(split_csv(line).at(2));
  EXPECT_EQ(labels, (std::vector<std::string>{"50.00%", "25.00%", "12.50%", "0"}));
}

TEST(Sweep, CsvIsDeterministicAndThreadIndependent) {
  const auto cases = synth_sources(6);
  const auto serial = sweep_csv(sweep(ablation_grid(), cases, kBaseline, 1));
  EXPECT_EQ(serial, sweep_csv(sweep(ablation_grid(), cases, kBaseline, 1)));
  EXPECT_EQ(serial, sweep_csv(sweep(ablation_grid(), cases, kBaseline, 4)));
}

TEST(Sweep, FailingCaseIsRecordedAndOthersContinue) {
  auto cases = synth_sources(2);
  cases.insert(cases.begin() + 1, ManifestEntry{"broken", "/nonexistent/r.fpt", "/nonexistent/r.pgm",
                                                "/nonexistent/t.fpt", std::nullopt, "/nonexistent/t.pgm"});
  const auto r = sweep({{"default", PipelineConfig{}}}, cases, kBaseline);
  EXPECT_EQ(r.records[0].dsc.size(), 2u);
  ASSERT_EQ(r.records[0].failures.size(), 1u);
  EXPECT_EQ(r.records[0].failures[0].rfind("broken: ", 0), 0u);
  const auto csv = sweep_csv(r);
  EXPECT_NE(csv.find(",2,1,"), std::string::npos);
}

TEST(Sweep, RejectsEmptyInputs) {
  EXPECT_PF_ERROR(sweep({}, synth_sources(1), kBaseline), ErrorKind::InvalidArgument);
  EXPECT_PF_ERROR(sweep(ablation_grid(), {}, kBaseline), ErrorKind::InvalidArgument);
}

TEST(Format, PercentAndDsc) {
  EXPECT_EQ(format_percent(0.0), "0");
  EXPECT_EQ(format_percent(0.125), "12.50%");
  EXPECT_EQ(format_percent(0.0625), "6.25%");
  EXPECT_EQ(format_dsc(0.61234), "0.6123");
}

TEST(Grid, ParseSectionsWithDefaults) {
  const auto g = parse_grid("d_sparse_negative=0\n[a]\nd_exclusive=0.5\n\n# x\n[b]\nstages=forward\n");
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0].id, "a");
  EXPECT_DOUBLE_EQ(g[0].config.d_exclusive.fraction, 0.5);
  EXPECT_DOUBLE_EQ(g[0].config.d_sparse_negative.fraction, 0.0);
  EXPECT_DOUBLE_EQ(g[1].config.d_exclusive.fraction, 0.25);
  EXPECT_EQ(g[1].config.stages, parse_stages("forward"));
  EXPECT_PF_ERROR(parse_grid("d_exclusive=0.5\n"), ErrorKind::InvalidConfig);
  EXPECT_PF_ERROR(parse_grid("[a\n"), ErrorKind::InvalidConfig);
  EXPECT_PF_ERROR(parse_grid("[a]\nbogus=1\n"), ErrorKind::InvalidConfig);
}

TEST(Grid, BuiltinSparseRowsInOrder) {
  const auto g = *builtin_grid("sparse");
  std::vector<std::string> ids;
  for (const auto& c : g) ids.push_back(c.id);
  EXPECT_EQ(ids, (std::vector<std::string>{"d_sparse=0/0", "d_sparse=6.25%/0", "d_sparse=12.50%/0",
                                           "d_sparse=25.00%/0", "d_sparse=0/6.25%", "d_sparse=0/12.50%",
                                           "d_sparse=0/25.00%"}));
  EXPECT_FALSE(builtin_grid("nope").has_value());
  for (const auto& name : {"ablation", "exclusive", "sparse", "negative"})
    for (const auto& c : *builtin_grid(name)) EXPECT_TRUE(validate_config(c.config).empty()) << c.id;
}
