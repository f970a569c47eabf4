#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "advkit/attacks.hpp"
#include "advkit/eval.hpp"
#include "advkit/patch.hpp"

namespace advkit {

using ConfidenceReport = std::vector<ConfidenceBreakdown>;
using Report = std::variant<EvalReport, SweepTable, PatchReport, ConfidenceReport>;

enum class ReportFormat { csv, json, svg };

std::string to_string(ReportFormat format);
/// Throws unknown_format.
ReportFormat report_format_from_string(const std::string& text);

// CSV layouts (errors and success rates with 2 decimals, confidences with 4):
//   eval:       dataset,model,num_images,top1_error,top5_error
//   sweep:      epsilon,top1_error,top5_error
//   patch:      patch,size,top1_success,top5_success
//   confidence: image,true_class,rank,class,confidence
std::string render_csv(const Report& report);

/// Canonical form: sorted keys, shortest round-trip numbers, trailing
/// newline. parse_report(render_json(r)) == r.
std::string render_json(const Report& report);
Report parse_report(std::string_view json_text);

/// Static horizontal bar chart. Confidence reports draw one group per image
/// with class names in a left column and bar length proportional to
/// confidence; other reports draw one bar per value.
std::string render_svg(const Report& report);

std::string render(const Report& report, ReportFormat format);

/// Validates the report (top-1 error >= top-5 error, top-5 success >=
/// top-1 success) and writes it atomically.
void emit_report(const Report& report, ReportFormat format, const std::filesystem::path& path);

/// Shortest decimal text that round-trips the double.
std::string format_shortest(double value);
/// Fixed-point text with `decimals` digits.
std::string format_fixed(double value, int decimals);

}  // namespace advkit
