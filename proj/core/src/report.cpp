#include "advkit/report.hpp"

#include <charconv>
#include <cstdio>

#include <json.hpp>

#include "advkit/error.hpp"
#include "advkit/io.hpp"

namespace advkit {

using nlohmann::json;

std::string to_string(ReportFormat format) {
  switch (format) {
    case ReportFormat::csv: return "csv";
    case ReportFormat::json: return "json";
    case ReportFormat::svg: return "svg";
  }
  return "?";
}

ReportFormat report_format_from_string(const std::string& text) {
  if (text == "csv") return ReportFormat::csv;
  if (text == "json") return ReportFormat::json;
  if (text == "svg") return ReportFormat::svg;
  fail(Errc::unknown_format, "unknown report format \"" + text + "\" (csv, json, svg)");
}

std::string format_shortest(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) fail(Errc::invalid_argument, "cannot format number");
  return std::string(buf, end);
}

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Validate {
  void operator()(const EvalReport& r) const { r.validate(); }
  void operator()(const SweepTable& r) const { r.validate(); }
  void operator()(const PatchReport& r) const { r.validate(); }
  void operator()(const ConfidenceReport& r) const {
    for (const auto& b : r) b.validate();
  }
};

struct ToCsv {
  std::string operator()(const EvalReport& r) const {
    return "dataset,model,num_images,top1_error,top5_error\n" + csv_field(r.dataset_id) + "," +
           csv_field(r.model_id) + "," + std::to_string(r.num_images) + "," +
           format_fixed(r.top1_error, 2) + "," + format_fixed(r.top5_error, 2) + "\n";
  }
  std::string operator()(const SweepTable& t) const {
    std::string out = "epsilon,top1_error,top5_error\n";
    for (const auto& r : t.rows)
      out += format_shortest(r.epsilon) + "," + format_fixed(r.top1_error, 2) + "," +
             format_fixed(r.top5_error, 2) + "\n";
    return out;
  }
  std::string operator()(const PatchReport& t) const {
    std::string out = "patch,size,top1_success,top5_success\n";
    for (const auto& r : t.rows)
      out += csv_field(r.patch) + "," + std::to_string(r.size) + "," +
             format_fixed(r.top1_success, 2) + "," + format_fixed(r.top5_success, 2) + "\n";
    return out;
  }
  std::string operator()(const ConfidenceReport& t) const {
    std::string out = "image,true_class,rank,class,confidence\n";
    for (const auto& b : t)
      for (std::size_t i = 0; i < b.top.size(); ++i)
        out += csv_field(b.image_id) + "," + csv_field(b.true_name) + "," + std::to_string(i + 1) +
               "," + csv_field(b.top[i].class_name) + "," + format_fixed(b.top[i].confidence, 4) +
               "\n";
    return out;
  }
};

struct ToJson {
  json operator()(const EvalReport& r) const {
    return {{"kind", "eval"},           {"dataset", r.dataset_id},   {"model", r.model_id},
            {"num_images", r.num_images}, {"top1_error", r.top1_error}, {"top5_error", r.top5_error}};
  }
  json operator()(const SweepTable& t) const {
    json rows = json::array();
    for (const auto& r : t.rows)
      rows.push_back({{"epsilon", r.epsilon}, {"top1_error", r.top1_error}, {"top5_error", r.top5_error}});
    return {{"kind", "sweep"}, {"rows", rows}};
  }
  json operator()(const PatchReport& t) const {
    json rows = json::array();
    for (const auto& r : t.rows)
      rows.push_back({{"patch", r.patch},
                      {"size", r.size},
                      {"top1_success", r.top1_success},
                      {"top5_success", r.top5_success}});
    return {{"kind", "patch_report"}, {"rows", rows}};
  }
  json operator()(const ConfidenceReport& t) const {
    json images = json::array();
    for (const auto& b : t) {
      json top = json::array();
      for (const auto& e : b.top)
        top.push_back({{"class", e.class_index}, {"name", e.class_name}, {"confidence", e.confidence}});
      images.push_back({{"image", b.image_id},
                        {"true_class", b.true_class},
                        {"true_name", b.true_name},
                        {"true_class_first", b.true_class_first},
                        {"top", top}});
    }
    return {{"kind", "confidence"}, {"images", images}};
  }
};

// One labelled bar per entry; values in [0, max_value].
struct Bar {
  std::string label;
  double value;
  std::string text;
};

constexpr double kLabelColumn = 160.0;
constexpr double kBarSpan = 300.0;
constexpr double kRowHeight = 18.0;

std::string bar_rows(const std::vector<Bar>& bars, double max_value, double y0) {
  std::string out;
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double y = y0 + static_cast<double>(i) * kRowHeight;
    const double width = kBarSpan * bars[i].value / max_value;
    out += "  <text class=\"label\" x=\"" + format_fixed(kLabelColumn - 6, 2) + "\" y=\"" +
           format_fixed(y + 12, 2) + "\" text-anchor=\"end\">" + xml_escape(bars[i].label) +
           "</text>\n";
    out += "  <rect class=\"bar\" x=\"" + format_fixed(kLabelColumn, 2) + "\" y=\"" +
           format_fixed(y + 2, 2) + "\" width=\"" + format_fixed(width, 2) + "\" height=\"" +
           format_fixed(kRowHeight - 4, 2) + "\"/>\n";
    out += "  <text class=\"value\" x=\"" + format_fixed(kLabelColumn + kBarSpan + 6, 2) +
           "\" y=\"" + format_fixed(y + 12, 2) + "\">" + xml_escape(bars[i].text) + "</text>\n";
  }
  return out;
}

std::string svg_document(const std::string& body, double height) {
  const double width = kLabelColumn + kBarSpan + 80;
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + format_fixed(width, 0) +
         "\" height=\"" + format_fixed(height, 0) + "\" font-family=\"sans-serif\" font-size=\"12\">\n" +
         "<style>.bar{fill:#4a7ab5}.label,.value{fill:#222}.title{font-weight:bold}</style>\n" + body +
         "</svg>\n";
}

struct ToSvg {
  std::string chart(const std::string& title, const std::vector<Bar>& bars, double max_value) const {
    std::string body = "<g class=\"chart\">\n  <text class=\"title\" x=\"4\" y=\"14\">" +
                       xml_escape(title) + "</text>\n" + bar_rows(bars, max_value, 20) + "</g>\n";
    return svg_document(body, 28 + kRowHeight * static_cast<double>(bars.size()));
  }
  std::string operator()(const EvalReport& r) const {
    return chart("Classification error (%) on " + r.dataset_id,
                 {{"top-1", r.top1_error, format_fixed(r.top1_error, 2)},
                  {"top-5", r.top5_error, format_fixed(r.top5_error, 2)}},
                 100.0);
  }
  std::string operator()(const SweepTable& t) const {
    std::vector<Bar> bars;
    for (const auto& r : t.rows) {
      bars.push_back({"eps " + format_shortest(r.epsilon) + " top-1", r.top1_error, format_fixed(r.top1_error, 2)});
      bars.push_back({"eps " + format_shortest(r.epsilon) + " top-5", r.top5_error, format_fixed(r.top5_error, 2)});
    }
    return chart("FGSM classification error (%)", bars, 100.0);
  }
  std::string operator()(const PatchReport& t) const {
    std::vector<Bar> bars;
    for (const auto& r : t.rows) {
      const std::string tag = r.patch + " " + std::to_string(r.size) + "x" + std::to_string(r.size);
      bars.push_back({tag + " top-1", r.top1_success, format_fixed(r.top1_success, 2)});
      bars.push_back({tag + " top-5", r.top5_success, format_fixed(r.top5_success, 2)});
    }
    return chart("Patch target success (%)", bars, 100.0);
  }
  std::string operator()(const ConfidenceReport& t) const {
    std::string body;
    double y = 0;
    for (const auto& b : t) {
      body += "<g class=\"image\" id=\"image-" + xml_escape(b.image_id) + "\" transform=\"translate(0," +
              format_fixed(y, 2) + ")\">\n  <text class=\"title\" x=\"4\" y=\"14\">image " +
              xml_escape(b.image_id) + " (true: " + xml_escape(b.true_name) + ")</text>\n";
      std::vector<Bar> bars;
      for (const auto& e : b.top) bars.push_back({e.class_name, e.confidence, format_fixed(e.confidence, 4)});
      body += bar_rows(bars, 1.0, 20) + "</g>\n";
      y += 28 + kRowHeight * static_cast<double>(b.top.size());
    }
    return svg_document(body, y);
  }
};

template <typename T>
T field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key))
    fail(Errc::corrupt_header, std::string("report JSON lacks \"") + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(Errc::corrupt_header, std::string("report JSON field \"") + key + "\": " + e.what());
  }
}

const json& array_field(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_array())
    fail(Errc::corrupt_header, std::string("report JSON lacks array \"") + key + "\"");
  return j.at(key);
}

}  // namespace

std::string render_csv(const Report& report) { return std::visit(ToCsv{}, report); }

std::string render_json(const Report& report) { return std::visit(ToJson{}, report).dump(2) + "\n"; }

std::string render_svg(const Report& report) { return std::visit(ToSvg{}, report); }

Report parse_report(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(Errc::corrupt_header, std::string("report is not valid JSON: ") + e.what());
  }
  const auto kind = field<std::string>(j, "kind");
  if (kind == "eval") {
    return EvalReport{field<std::string>(j, "dataset"), field<std::string>(j, "model"),
                      field<double>(j, "top1_error"), field<double>(j, "top5_error"),
                      field<std::size_t>(j, "num_images")};
  }
  if (kind == "sweep") {
    SweepTable t;
    for (const json& r : array_field(j, "rows"))
      t.rows.push_back({field<double>(r, "epsilon"), field<double>(r, "top1_error"),
                        field<double>(r, "top5_error")});
    return t;
  }
  if (kind == "patch_report") {
    PatchReport t;
    for (const json& r : array_field(j, "rows"))
      t.rows.push_back({field<std::string>(r, "patch"), field<std::size_t>(r, "size"),
                        field<double>(r, "top1_success"), field<double>(r, "top5_success")});
    return t;
  }
  if (kind == "confidence") {
    ConfidenceReport t;
    for (const json& b : array_field(j, "images")) {
      ConfidenceBreakdown cb;
      cb.image_id = field<std::string>(b, "image");
      cb.true_class = field<int>(b, "true_class");
      cb.true_name = field<std::string>(b, "true_name");
      cb.true_class_first = field<bool>(b, "true_class_first");
      for (const json& e : array_field(b, "top"))
        cb.top.push_back({field<int>(e, "class"), field<std::string>(e, "name"),
                          field<double>(e, "confidence")});
      t.push_back(std::move(cb));
    }
    return t;
  }
  fail(Errc::unknown_format, "unknown report kind \"" + kind + "\"");
}

std::string render(const Report& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::csv: return render_csv(report);
    case ReportFormat::json: return render_json(report);
    case ReportFormat::svg: return render_svg(report);
  }
  fail(Errc::unknown_format, "unknown report format");
}

void emit_report(const Report& report, ReportFormat format, const std::filesystem::path& path) {
  std::visit(Validate{}, report);
  write_file_atomic(path, render(report, format));
}

}  // namespace advkit
