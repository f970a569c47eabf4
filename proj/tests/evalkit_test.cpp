#include <gtest/gtest.h>

#include <cmath>
#include <regex>
#include <sstream>

#include "advkit/eval.hpp"
#include "advkit/io.hpp"
#include "advkit/report.hpp"
#include "test_support.hpp"

namespace advkit {
namespace {

using testing::raised;
using testing::ScratchDir;

constexpr std::size_t kClasses = 6;

// logits = the image's K pixels: flatten then an identity dense layer.
Model passthrough_model(std::size_t classes) {
  ArchitectureSpec spec;
  spec.input_shape = Shape{1, 1, classes};
  spec.num_classes = classes;
  spec.layers = {{LayerKind::flatten, "f"}, {LayerKind::dense, "d", 0, 0, 1, 0, classes}};
  Tensor eye(Shape{classes, classes});
  for (std::size_t i = 0; i < classes; ++i) eye.at(i, i) = 1.0f;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < classes; ++i) names.push_back("c" + std::to_string(i));
  return build_model(spec, 1, names, NormalizationSpec::identity(1))
      .with_values({eye, Tensor(Shape{classes}, 0.0f)});
}

// Ten images whose pixels (the logits) are multiples of 1/16, so ties occur.
Dataset toy_scores() {
  Rng rng(77);
  std::vector<Tensor> images;
  std::vector<int> labels;
  for (int i = 0; i < 10; ++i) {
    Tensor t(Shape{1, 1, kClasses});
    for (float& v : t.data()) v = static_cast<float>(rng.below(17)) / 16.0f;
    images.push_back(t);
    labels.push_back(static_cast<int>(rng.below(kClasses)));
  }
  std::vector<std::string> names;
  for (std::size_t i = 0; i < kClasses; ++i) names.push_back("c" + std::to_string(i));
  return Dataset(std::move(images), std::move(labels), names);
}

// Rank of the true class under "higher score first, lower index on ties".
std::size_t true_rank(const Tensor& scores, int label) {
  std::size_t rank = 0;
  const float mine = scores[static_cast<std::size_t>(label)];
  for (std::size_t j = 0; j < scores.numel(); ++j)
    if (scores[j] > mine || (scores[j] == mine && j < static_cast<std::size_t>(label))) ++rank;
  return rank;
}

TEST(TopkError, MatchesHandEnumerationOnToySet) {
  const Model m = passthrough_model(kClasses);
  const Dataset ds = toy_scores();
  for (std::size_t k = 1; k <= kClasses; ++k) {
    std::size_t misses = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) misses += true_rank(ds.image(i), ds.label(i)) >= k;
    EXPECT_DOUBLE_EQ(topk_error(m, ds, k), 100.0 * static_cast<double>(misses) / 10.0) << "k = " << k;
  }
}

TEST(TopkError, NonIncreasingInKAndZeroAtK) {
  const Model m = passthrough_model(kClasses);
  const Dataset ds = toy_scores();
  double previous = 100.0;
  for (std::size_t k = 1; k <= kClasses; ++k) {
    const double e = topk_error(m, ds, k);
    EXPECT_LE(e, previous);
    previous = e;
  }
  EXPECT_EQ(topk_error(m, ds, kClasses), 0.0);
}

TEST(TopkError, PerfectClassifierScoresZero) {
  const Model m = passthrough_model(kClasses);
  std::vector<Tensor> images;
  std::vector<int> labels;
  for (std::size_t c = 0; c < kClasses; ++c) {
    Tensor t(Shape{1, 1, kClasses}, 0.1f);
    t[c] = 0.9f;
    images.push_back(t);
    labels.push_back(static_cast<int>(c));
  }
  Dataset ds(images, labels, passthrough_model(kClasses).class_names());
  for (std::size_t k = 1; k <= kClasses; ++k) EXPECT_EQ(topk_error(m, ds, k), 0.0);
}

TEST(TopkError, InvalidInputsRejected) {
  const Model m = passthrough_model(kClasses);
  EXPECT_EQ(raised([&] { topk_error(m, Dataset{}, 1); }).code, Errc::invalid_argument);
  EXPECT_EQ(raised([&] { topk_error(m, toy_scores(), 0); }).code, Errc::out_of_range);
  EXPECT_EQ(raised([&] { topk_error(m, toy_scores(), kClasses + 1); }).code, Errc::out_of_range);
}

TEST(Evaluate, FillsReportAndRespectsOrdering) {
  const Model m = passthrough_model(kClasses);
  const Dataset ds = toy_scores();
  const EvalReport r = evaluate(m, ds, "toy", "identity");
  EXPECT_EQ(r.dataset_id, "toy");
  EXPECT_EQ(r.model_id, "identity");
  EXPECT_EQ(r.num_images, 10u);
  EXPECT_EQ(r.top1_error, topk_error(m, ds, 1));
  EXPECT_EQ(r.top5_error, topk_error(m, ds, 5));
  EXPECT_GE(r.top1_error, r.top5_error);
}

TEST(ConfidenceBreakdown, OrderedSumsToOneAndMarksTruth) {
  const Model m = passthrough_model(kClasses);
  const Tensor img(Shape{1, 1, kClasses}, {0.2f, 0.9f, 0.9f, 0.1f, 0.5f, 0.0f});
  const auto all = confidence_breakdown(m, img, 1, kClasses, "img0");
  ASSERT_EQ(all.top.size(), kClasses);
  double sum = 0;
  for (std::size_t i = 0; i < all.top.size(); ++i) {
    sum += all.top[i].confidence;
    if (i) EXPECT_GE(all.top[i - 1].confidence, all.top[i].confidence);
  }
  EXPECT_NEAR(sum, 1.0, 1e-5);
  EXPECT_EQ(all.top[0].class_index, 1);  // tie with class 2 goes to the lower index
  EXPECT_EQ(all.top[1].class_index, 2);
  EXPECT_EQ(all.top[0].class_name, "c1");
  EXPECT_TRUE(all.true_class_first);
  EXPECT_EQ(all.true_name, "c1");
  EXPECT_FALSE(confidence_breakdown(m, img, 2, 5).true_class_first);

  const auto one = confidence_breakdown(m, img, 4, 1);
  ASSERT_EQ(one.top.size(), 1u);
  EXPECT_EQ(one.top[0].class_index, predict_topk(m, img, 1)[0].index);
  EXPECT_EQ(raised([&] { confidence_breakdown(m, img, 0, 0); }).code, Errc::out_of_range);
}

// Reference-format rows taken from published result tables; these only fix
// how numbers are printed, not what this toolkit should measure.
EvalReport reference_eval() { return {"imagenet-val", "resnet34", 19.10, 4.30, 5000}; }
SweepTable reference_sweep() { return {{{0.01, 83.44, 43.76}, {0.02, 93.56, 60.54}}}; }
PatchReport reference_patches() { return {{{"balloon", 64, 97.44, 99.83}, {"cock", 32, 78.75, 93.48}}}; }
ConfidenceReport reference_confidence() {
  ConfidenceBreakdown b;
  b.image_id = "0";
  b.true_class = 0;
  b.true_name = "tench";
  b.true_class_first = true;
  b.top = {{0, "tench", 0.9817}, {389, "barracouta", 0.0095}, {391, "coho", 0.0085},
           {395, "gar", 0.0002}, {394, "sturgeon", 0.0001}};
  return {b};
}

TEST(Csv, HeadersAndPrintedPrecision) {
  EXPECT_EQ(render_csv(reference_eval()),
            "dataset,model,num_images,top1_error,top5_error\nimagenet-val,resnet34,5000,19.10,4.30\n");
  EXPECT_EQ(render_csv(reference_sweep()), "epsilon,top1_error,top5_error\n0.01,83.44,43.76\n0.02,93.56,60.54\n");
  EXPECT_EQ(render_csv(reference_patches()),
            "patch,size,top1_success,top5_success\nballoon,64,97.44,99.83\ncock,32,78.75,93.48\n");
  const std::string conf = render_csv(reference_confidence());
  EXPECT_EQ(conf.substr(0, conf.find('\n')), "image,true_class,rank,class,confidence");
  EXPECT_NE(conf.find("\n0,tench,1,tench,0.9817\n"), std::string::npos);
  EXPECT_NE(conf.find("\n0,tench,5,sturgeon,0.0001\n"), std::string::npos);
}

TEST(Csv, ParsesBackWithinPrintedPrecision) {
  const SweepTable t{{{0.05, 12.345678, 1.004999}, {0.1, 50.0 / 3.0, 2.0 / 3.0}}};
  std::istringstream in(render_csv(t));
  std::string line;
  std::getline(in, line);
  for (const SweepRow& row : t.rows) {
    ASSERT_TRUE(std::getline(in, line));
    double eps = 0, top1 = 0, top5 = 0;
    ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%lf,%lf", &eps, &top1, &top5), 3);
    EXPECT_EQ(eps, row.epsilon);
    EXPECT_LE(std::abs(top1 - row.top1_error), 0.005 + 1e-12);
    EXPECT_LE(std::abs(top5 - row.top5_error), 0.005 + 1e-12);
  }
}

TEST(Csv, QuotesFieldsContainingCommas) {
  const PatchReport t{{{"keyboard, computer", 5, 1.0, 2.0}}};
  EXPECT_NE(render_csv(t).find("\"keyboard, computer\",5,1.00,2.00"), std::string::npos);
}

TEST(Json, EmitParseEmitIsByteIdentical) {
  const std::vector<Report> reports{reference_eval(), reference_sweep(), reference_patches(),
                                    reference_confidence(),
                                    SweepTable{{{0.1, 100.0 / 3.0, 1.0 / 7.0}}}};
  for (const Report& r : reports) {
    const std::string first = render_json(r);
    const Report back = parse_report(first);
    EXPECT_EQ(render_json(back), first);
    EXPECT_EQ(back, r);
  }
}

TEST(Json, KeysAreSortedAndKindTagged) {
  const std::string j = render_json(reference_eval());
  EXPECT_LT(j.find("\"dataset\""), j.find("\"kind\""));
  EXPECT_LT(j.find("\"kind\""), j.find("\"model\""));
  EXPECT_NE(j.find("\"kind\": \"eval\""), std::string::npos);
  EXPECT_EQ(raised([] { parse_report("{\"kind\": \"mystery\"}"); }).code, Errc::unknown_format);
  EXPECT_EQ(raised([] { parse_report("{\"rows\": []}"); }).code, Errc::corrupt_header);
  EXPECT_EQ(raised([] { parse_report("not json"); }).code, Errc::corrupt_header);
}

std::vector<double> bar_widths(const std::string& svg) {
  static const std::regex bar(R"re(<rect class="bar"[^>]* width="([0-9.]+)")re");
  std::vector<double> widths;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), bar); it != std::sregex_iterator(); ++it)
    widths.push_back(std::stod((*it)[1].str()));
  return widths;
}

TEST(Svg, BarLengthsProportionalToConfidence) {
  ConfidenceBreakdown b;
  b.image_id = "x";
  b.true_class = 0;
  b.true_name = "a";
  b.true_class_first = true;
  b.top = {{0, "a", 0.5}, {1, "b", 0.25}};
  const std::string svg = render_svg(ConfidenceReport{b});
  const auto widths = bar_widths(svg);
  ASSERT_EQ(widths.size(), 2u);
  EXPECT_NEAR(widths[0] / widths[1], 2.0, 0.01);
  EXPECT_NE(svg.find(">a</text>"), std::string::npos);
  EXPECT_EQ(svg.find("<script"), std::string::npos);
}

TEST(Svg, OneGroupPerImageWithOneBarPerClass) {
  ConfidenceReport r = reference_confidence();
  r.push_back(r.front());
  r.back().image_id = "6";
  const std::string svg = render_svg(r);
  std::size_t groups = 0;
  for (std::size_t at = svg.find("<g class=\"image\""); at != std::string::npos;
       at = svg.find("<g class=\"image\"", at + 1))
    ++groups;
  EXPECT_EQ(groups, 2u);
  EXPECT_EQ(bar_widths(svg).size(), 10u);
  EXPECT_NE(svg.find("barracouta"), std::string::npos);
}

TEST(EmitReport, WritesEachFormatAndRejectsBadInput) {
  ScratchDir dir("report");
  emit_report(reference_sweep(), ReportFormat::csv, dir / "s.csv");
  emit_report(reference_sweep(), ReportFormat::json, dir / "s.json");
  emit_report(reference_sweep(), ReportFormat::svg, dir / "s.svg");
  EXPECT_EQ(read_file(dir / "s.csv"), render_csv(reference_sweep()));
  EXPECT_EQ(parse_report(read_file(dir / "s.json")), Report(reference_sweep()));
  EXPECT_EQ(read_file(dir / "s.svg").substr(0, 4), "<svg");

  EXPECT_EQ(raised([] { report_format_from_string("xlsx"); }).code, Errc::unknown_format);
  EXPECT_EQ(raised([&] { emit_report(reference_eval(), ReportFormat::csv, dir / "no" / "such" / "x.csv"); }).code,
            Errc::io_failure);

  // A report violating top-1 >= top-5 is refused before anything is written.
  const SweepTable inverted{{{0.1, 10.0, 20.0}}};
  EXPECT_TRUE(raised([&] { emit_report(inverted, ReportFormat::csv, dir / "bad.csv"); }).thrown);
  EXPECT_FALSE(std::filesystem::exists(dir / "bad.csv"));
  const EvalReport inverted_eval{"d", "m", 1.0, 2.0, 3};
  EXPECT_TRUE(raised([&] { emit_report(inverted_eval, ReportFormat::json, dir / "bad.json"); }).thrown);
}

TEST(Formatting, ShortestAndFixed) {
  EXPECT_EQ(format_shortest(0.1), "0.1");
  EXPECT_EQ(format_shortest(0.05), "0.05");
  EXPECT_EQ(format_shortest(0.30000000000000004), "0.30000000000000004");
  EXPECT_EQ(format_fixed(93.556, 2), "93.56");
  EXPECT_EQ(format_fixed(4.3, 2), "4.30");
  EXPECT_EQ(format_fixed(0.98174, 4), "0.9817");
}

}  // namespace
}  // namespace advkit
