#include "advkit/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "advkit/attacks.hpp"
#include "advkit/checkpoint.hpp"
#include "advkit/dataset.hpp"
#include "advkit/error.hpp"
#include "advkit/eval.hpp"
#include "advkit/io.hpp"
#include "advkit/parallel.hpp"
#include "advkit/patch.hpp"
#include "advkit/report.hpp"
#include "advkit/synth_digits.hpp"
#include "advkit/train.hpp"

#ifndef ADVKIT_VERSION
#define ADVKIT_VERSION "0.0.0"
#endif

namespace advkit::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Scalar parsing

double parse_double(std::string_view text, const std::string& what) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || end != text.data() + text.size() || !std::isfinite(v))
    fail(Errc::invalid_argument, what + ": \"" + std::string(text) + "\" is not a number");
  return v;
}

std::uint64_t parse_uint(std::string_view text, const std::string& what) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || end != text.data() + text.size())
    fail(Errc::invalid_argument, what + ": \"" + std::string(text) + "\" is not a non-negative integer");
  return v;
}

std::int64_t parse_int(std::string_view text, const std::string& what) {
  std::int64_t v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || end != text.data() + text.size())
    fail(Errc::invalid_argument, what + ": \"" + std::string(text) + "\" is not an integer");
  return v;
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = text.find(',', start);
    parts.push_back(text.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return parts;
}

// ---------------------------------------------------------------------------
// Config schema

enum class Kind { string, uint, integer, number, boolean, numbers, uints, strings };

struct Key {
  std::string name;  // config field
  std::string flag;  // command-line spelling
  Kind kind;
  json fallback;
  std::string help;
};

std::vector<Key> data_keys() {
  return {
      {"data_format", "--data-format", Kind::string, "idx", "dataset format: idx or dir"},
      {"images", "--images", Kind::string, "", "IDX image file"},
      {"labels", "--labels", Kind::string, "", "IDX label file"},
      {"classes", "--classes", Kind::string, "", "class-names file, one per line"},
      {"data_dir", "--data-dir", Kind::string, "", "PNG directory with labels.csv"},
  };
}

const std::vector<std::string> kSubcommands{"train", "eval", "fgsm", "sweep", "patch-train", "patch-eval", "report"};

std::vector<Key> keys_for(const std::string& sub) {
  const Key checkpoint{"checkpoint", "--checkpoint", Kind::string, "", "model checkpoint"};
  const Key formats{"formats", "--format", Kind::strings, json::array({"csv", "json"}),
                    "report formats, comma separated: csv,json,svg"};
  const Key show{"show", "--show", Kind::uints, json::array(), "image indices for confidence breakdowns"};
  const Key dataset_id{"dataset_id", "--dataset-id", Kind::string, "", "dataset label in reports"};
  const Key model_id{"model_id", "--model-id", Kind::string, "", "model label in reports"};
  const Key eps{"eps", "--eps", Kind::numbers, json::array(), "epsilons: start:stop:step or a,b,c"};
  const Key placement{"placement", "--placement", Kind::string, "uniform", "patch placement: uniform or center"};

  std::vector<Key> keys;
  if (sub != "report") keys = data_keys();
  if (sub == "train") {
    keys.push_back({"epochs", "--epochs", Kind::uint, 4, "training epochs"});
    keys.push_back({"batch_size", "--batch-size", Kind::uint, 32, "minibatch size"});
    keys.push_back({"learning_rate", "--lr", Kind::number, 0.02, "SGD learning rate"});
    keys.push_back({"momentum", "--momentum", Kind::number, 0.9, "SGD momentum"});
    keys.push_back({"seed", "--seed", Kind::uint, 1, "initialisation and shuffling seed"});
  } else if (sub == "eval") {
    keys.insert(keys.end(), {checkpoint, show, formats, dataset_id, model_id});
  } else if (sub == "fgsm") {
    keys.insert(keys.end(), {checkpoint, eps, show, formats, dataset_id, model_id});
  } else if (sub == "sweep") {
    keys.insert(keys.end(), {checkpoint, eps, formats});
  } else if (sub == "patch-train") {
    keys.push_back(checkpoint);
    keys.push_back({"sizes", "--sizes", Kind::uints, json::array(), "patch side lengths"});
    keys.push_back({"target_class", "--target", Kind::integer, 0, "target class index"});
    keys.push_back({"steps", "--steps", Kind::uint, 500, "optimisation steps per patch"});
    keys.push_back({"learning_rate", "--lr", Kind::number, 0.5, "gradient-ascent step size"});
    keys.push_back({"batch_size", "--batch-size", Kind::uint, 32, "images per step"});
    keys.push_back({"seed", "--seed", Kind::uint, 1, "initialisation and placement seed"});
    keys.push_back(placement);
    keys.push_back({"name", "--name", Kind::string, "patch", "patch name prefix"});
  } else if (sub == "patch-eval") {
    keys.push_back(checkpoint);
    keys.push_back({"patches", "--patch", Kind::strings, json::array(), "patch files"});
    keys.push_back({"seed", "--seed", Kind::uint, 1, "placement seed"});
    keys.push_back(placement);
    keys.push_back({"exclude_target", "--exclude-target", Kind::boolean, false,
                    "skip images whose label is the patch's target"});
    keys.push_back(formats);
  } else if (sub == "report") {
    keys.push_back({"input", "--input", Kind::string, "", "JSON report to re-render"});
    keys.push_back(formats);
  }
  return keys;
}

json convert_json(const Key& key, const json& v) {
  const std::string what = "config field \"" + key.name + "\"";
  auto bad = [&]() -> json { fail(Errc::invalid_argument, what + " has the wrong type: " + v.dump()); };
  switch (key.kind) {
    case Kind::string:
      return v.is_string() ? v : bad();
    case Kind::uint:
      return v.is_number_unsigned() ? v : bad();
    case Kind::integer:
      return v.is_number_integer() ? v : bad();
    case Kind::number:
      return v.is_number() ? json(v.get<double>()) : bad();
    case Kind::boolean:
      return v.is_boolean() ? v : bad();
    case Kind::numbers: {
      if (v.is_string()) return parse_eps(v.get<std::string>());
      if (!v.is_array()) return bad();
      json out = json::array();
      for (const json& e : v) out.push_back(e.is_number() ? json(e.get<double>()) : bad());
      return out;
    }
    case Kind::uints: {
      if (v.is_string()) {
        json out = json::array();
        for (const auto& part : split_commas(v.get<std::string>())) out.push_back(parse_uint(part, what));
        return out;
      }
      if (!v.is_array()) return bad();
      for (const json& e : v)
        if (!e.is_number_unsigned()) return bad();
      return v;
    }
    case Kind::strings: {
      if (v.is_string()) return json::array({v});
      if (!v.is_array()) return bad();
      for (const json& e : v)
        if (!e.is_string()) return bad();
      return v;
    }
  }
  return bad();
}

json convert_flag(const Key& key, const std::vector<std::string>& values) {
  const std::string what = key.flag;
  const std::string& first = values.front();
  switch (key.kind) {
    case Kind::string: return first;
    case Kind::uint: return parse_uint(first, what);
    case Kind::integer: return parse_int(first, what);
    case Kind::number: return parse_double(first, what);
    case Kind::boolean: return true;
    case Kind::numbers: return parse_eps(first);
    case Kind::uints: {
      json out = json::array();
      for (const auto& v : values)
        for (const auto& part : split_commas(v)) out.push_back(parse_uint(part, what));
      return out;
    }
    case Kind::strings: {
      json out = json::array();
      for (const auto& v : values)
        for (const auto& part : split_commas(v)) out.push_back(part);
      return out;
    }
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Outputs: every file a run creates is tracked so a failed run can remove
// what it wrote. The manifest is written last.

class Outputs {
 public:
  Outputs(fs::path dir, std::ostream& log) : dir_(std::move(dir)), log_(log) {}

  fs::path path(const std::string& name) const { return dir_ / name; }

  void prepare() {
    if (!fs::exists(dir_)) {
      fs::create_directories(dir_);
      created_dir_ = true;
    }
  }

  void write(const std::string& name, std::string_view bytes) {
    prepare();
    write_file_atomic(path(name), bytes);
    track(name);
  }

  void emit(const Report& report, ReportFormat format, const std::string& stem) {
    prepare();
    const std::string name = stem + "." + to_string(format);
    emit_report(report, format, path(name));
    track(name);
  }

  void track(const std::string& name) {
    written_.push_back(path(name));
    log_ << "wrote " << path(name).string() << "\n";
  }

  void discard() noexcept {
    std::error_code ec;
    for (auto it = written_.rbegin(); it != written_.rend(); ++it) fs::remove_all(*it, ec);
    if (created_dir_) fs::remove_all(dir_, ec);
    written_.clear();
  }

 private:
  fs::path dir_;
  std::ostream& log_;
  std::vector<fs::path> written_;
  bool created_dir_ = false;
};

// ---------------------------------------------------------------------------
// Validation helpers

struct Invalid : std::runtime_error {
  using std::runtime_error::runtime_error;
};

[[noreturn]] void invalid(const std::string& message) { throw Invalid(message); }

void require_file(const std::string& value, const std::string& key) {
  if (value.empty()) invalid("missing required setting \"" + key + "\"");
  if (!fs::is_regular_file(value)) invalid(key + ": no such file " + value);
}

std::string str(const json& cfg, const char* key) { return cfg.at(key).get<std::string>(); }

std::vector<ReportFormat> formats_of(const json& cfg) {
  std::vector<ReportFormat> out;
  for (const json& f : cfg.at("formats")) {
    const ReportFormat fmt = report_format_from_string(f.get<std::string>());
    if (std::find(out.begin(), out.end(), fmt) != out.end()) invalid("format listed twice: " + f.get<std::string>());
    out.push_back(fmt);
  }
  if (out.empty()) invalid("no report formats requested");
  return out;
}

std::vector<double> eps_of(const json& cfg) {
  std::vector<double> eps = cfg.at("eps").get<std::vector<double>>();
  if (eps.empty()) invalid("missing required setting \"eps\"");
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!(eps[i] >= 0.0 && eps[i] <= 1.0)) invalid("epsilon " + format_shortest(eps[i]) + " outside [0, 1]");
    if (i && !(eps[i] > eps[i - 1])) invalid("epsilon list must be strictly ascending");
  }
  return eps;
}

void validate_data_settings(const json& cfg) {
  const std::string format = str(cfg, "data_format");
  if (format == "idx") {
    require_file(str(cfg, "images"), "images");
    require_file(str(cfg, "labels"), "labels");
  } else if (format == "dir") {
    const std::string dir = str(cfg, "data_dir");
    if (dir.empty()) invalid("missing required setting \"data_dir\"");
    if (!fs::is_directory(dir)) invalid("data_dir: no such directory " + dir);
  } else {
    invalid("data_format must be idx or dir, got \"" + format + "\"");
  }
  if (!str(cfg, "classes").empty()) require_file(str(cfg, "classes"), "classes");
}

// Cheap checks on the merged config, before any file is opened.
void validate_settings(const std::string& sub, const json& cfg) {
  if (sub != "report") validate_data_settings(cfg);
  if (cfg.contains("checkpoint")) require_file(str(cfg, "checkpoint"), "checkpoint");
  if (cfg.contains("formats")) formats_of(cfg);
  if (sub == "train") {
    TrainConfig t;
    t.epochs = cfg.at("epochs").get<std::size_t>();
    t.batch_size = cfg.at("batch_size").get<std::size_t>();
    t.learning_rate = cfg.at("learning_rate").get<double>();
    t.momentum = cfg.at("momentum").get<double>();
    t.validate();
  }
  if (sub == "sweep") eps_of(cfg);
  if (sub == "fgsm" && eps_of(cfg).size() != 1) invalid("fgsm takes exactly one epsilon");
  if (sub == "patch-train") {
    const auto sizes = cfg.at("sizes").get<std::vector<std::size_t>>();
    if (sizes.empty()) invalid("missing required setting \"sizes\"");
    if (std::set<std::size_t>(sizes.begin(), sizes.end()).size() != sizes.size()) invalid("patch sizes repeat");
    for (std::size_t s : sizes)
      if (s == 0) invalid("patch size must be positive");
    if (cfg.at("target_class").get<std::int64_t>() < 0) invalid("target class must be non-negative");
    if (cfg.at("steps").get<std::size_t>() == 0) invalid("steps must be positive");
    if (cfg.at("batch_size").get<std::size_t>() == 0) invalid("batch_size must be positive");
    if (!(cfg.at("learning_rate").get<double>() > 0.0)) invalid("learning rate must be positive");
    const std::string name = str(cfg, "name");
    if (name.empty() || name.find_first_not_of("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.-") !=
                            std::string::npos)
      invalid("patch name must be nonempty and use only letters, digits, '_', '.', '-'");
  }
  if (cfg.contains("placement")) placement_from_string(str(cfg, "placement"));
  if (sub == "patch-eval") {
    const auto patches = cfg.at("patches").get<std::vector<std::string>>();
    if (patches.empty()) invalid("missing required setting \"patches\"");
    for (const auto& p : patches) require_file(p, "patches");
  }
  if (sub == "report") require_file(str(cfg, "input"), "input");
}

// ---------------------------------------------------------------------------
// Inputs

std::vector<std::string> numbered_names(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back(std::to_string(i));
  return names;
}

int max_label(const Dataset& ds) {
  return ds.labels().empty() ? -1 : *std::max_element(ds.labels().begin(), ds.labels().end());
}

Dataset relabel(const Dataset& ds, std::vector<std::string> names) {
  return Dataset(ds.images(), ds.labels(), std::move(names), ds.normalization());
}

Dataset load_data(const json& cfg, const Model* model) {
  const std::string classes = str(cfg, "classes");
  std::optional<std::vector<std::string>> given;
  if (!classes.empty()) given = load_class_names(classes);

  Dataset ds;
  if (str(cfg, "data_format") == "idx") {
    ds = load_idx(str(cfg, "images"), str(cfg, "labels"), given ? *given : numbered_names(256));
    if (!given) ds = relabel(ds, numbered_names(static_cast<std::size_t>(max_label(ds) + 1)));
  } else {
    const fs::path root = str(cfg, "data_dir");
    ds = load_image_dir(root);
    if (given) {
      if (static_cast<std::size_t>(max_label(ds)) >= given->size())
        fail(Errc::out_of_range, classes + " names fewer classes than the labels use");
      ds = relabel(ds, *given);
    } else if (fs::exists(root / "classes.txt")) {
      given = ds.class_names();
    }
  }
  if (model) {
    if (!(ds.image_shape() == model->spec().input_shape))
      fail(Errc::shape_mismatch, "dataset images are " + ds.image_shape().str() + " but the model expects " +
                                     model->spec().input_shape.str());
    if (static_cast<std::size_t>(max_label(ds)) >= model->num_classes())
      fail(Errc::out_of_range, "dataset label " + std::to_string(max_label(ds)) + " exceeds the model's " +
                                   std::to_string(model->num_classes()) + " classes");
    if (given && *given != model->class_names())
      fail(Errc::invalid_argument, "dataset class names differ from the checkpoint's");
    ds = relabel(ds, model->class_names());
  }
  return ds;
}

std::string dataset_id_of(const json& cfg) {
  if (cfg.contains("dataset_id") && !str(cfg, "dataset_id").empty()) return str(cfg, "dataset_id");
  if (str(cfg, "data_format") == "idx") return fs::path(str(cfg, "images")).stem().string();
  return fs::path(str(cfg, "data_dir")).lexically_normal().filename().string();
}

std::string model_id_of(const json& cfg) {
  if (cfg.contains("model_id") && !str(cfg, "model_id").empty()) return str(cfg, "model_id");
  return fs::path(str(cfg, "checkpoint")).stem().string();
}

json input_digests(const std::string& sub, const json& cfg) {
  json d = json::object();
  auto add = [&](const std::string& p) {
    if (!p.empty()) d[p] = sha256_file(p);
  };
  if (sub != "report") {
    if (str(cfg, "data_format") == "idx") {
      add(str(cfg, "images"));
      add(str(cfg, "labels"));
    } else {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(str(cfg, "data_dir")))
        if (e.is_regular_file()) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) add(f.string());
    }
    add(str(cfg, "classes"));
  }
  if (cfg.contains("checkpoint")) add(str(cfg, "checkpoint"));
  if (cfg.contains("patches"))
    for (const json& p : cfg.at("patches")) add(p.get<std::string>());
  if (cfg.contains("input")) add(str(cfg, "input"));
  return d;
}

ConfidenceReport breakdowns(const Model& model, const Dataset& ds, const json& cfg, const std::string& suffix = {}) {
  ConfidenceReport out;
  for (const json& j : cfg.at("show")) {
    const auto i = j.get<std::size_t>();
    out.push_back(confidence_breakdown(model, ds.image(i), ds.label(i), std::min<std::size_t>(5, model.num_classes()),
                                       std::to_string(i) + suffix));
  }
  return out;
}

void check_show(const json& cfg, const Dataset& ds) {
  for (const json& j : cfg.at("show"))
    if (j.get<std::size_t>() >= ds.size())
      fail(Errc::out_of_range, "--show index " + std::to_string(j.get<std::size_t>()) + " but the dataset has " +
                                   std::to_string(ds.size()) + " images");
}

// ---------------------------------------------------------------------------
// Subcommands. Each splits into a load phase (may throw; nothing written)
// and a write phase.

struct Job {
  std::function<void(Outputs&)> write;
  json seeds = json::object();
};

Job plan_train(const json& cfg, std::ostream& log) {
  Dataset ds = load_data(cfg, nullptr);
  TrainConfig t;
  t.epochs = cfg.at("epochs").get<std::size_t>();
  t.batch_size = cfg.at("batch_size").get<std::size_t>();
  t.learning_rate = cfg.at("learning_rate").get<double>();
  t.momentum = cfg.at("momentum").get<double>();
  t.seed = cfg.at("seed").get<std::uint64_t>();
  const auto spec = ArchitectureSpec::default_victim(ds.image_shape(), ds.num_classes());
  Model initial = build_model(spec, t.seed, ds.class_names(), compute_normalization(ds));
  Job job;
  job.seeds = {{"train", t.seed}};
  job.write = [ds = std::move(ds), initial = std::move(initial), t, &log](Outputs& out) {
    TrainResult r = train(initial, ds, t, [&](std::size_t epoch, const EpochStats& s) {
      log << "epoch " << epoch + 1 << ": loss " << format_fixed(s.train_loss, 4) << ", train error "
          << format_fixed(s.train_error_percent, 2) << "%\n";
    });
    std::string history = "epoch,train_loss,train_error\n";
    for (std::size_t e = 0; e < r.history.size(); ++e)
      history += std::to_string(e + 1) + "," + format_shortest(r.history[e].train_loss) + "," +
                 format_fixed(r.history[e].train_error_percent, 2) + "\n";
    out.write("model.ckpt", encode_checkpoint(r.model));
    out.write("history.csv", history);
  };
  return job;
}

Job plan_eval(const json& cfg) {
  Model model = load_checkpoint(str(cfg, "checkpoint"));
  Dataset ds = load_data(cfg, &model);
  check_show(cfg, ds);
  const auto formats = formats_of(cfg);
  Job job;
  job.write = [=](Outputs& out) {
    const EvalReport report = evaluate(model, ds, dataset_id_of(cfg), model_id_of(cfg));
    for (ReportFormat f : formats) out.emit(report, f, "eval");
    const ConfidenceReport conf = breakdowns(model, ds, cfg);
    if (!conf.empty())
      for (ReportFormat f : formats) out.emit(conf, f, "confidence");
  };
  return job;
}

Job plan_fgsm(const json& cfg) {
  Model model = load_checkpoint(str(cfg, "checkpoint"));
  Dataset ds = load_data(cfg, &model);
  check_show(cfg, ds);
  const auto formats = formats_of(cfg);
  const double eps = eps_of(cfg).front();
  Job job;
  job.write = [=](Outputs& out) {
    std::vector<Tensor> adv;
    adv.reserve(ds.size());
    constexpr std::size_t kBlock = 256;
    for (std::size_t start = 0; start < ds.size(); start += kBlock) {
      std::vector<std::size_t> idx;
      std::vector<int> labels;
      for (std::size_t i = start; i < std::min(ds.size(), start + kBlock); ++i) {
        idx.push_back(i);
        labels.push_back(ds.label(i));
      }
      const Tensor attacked = fgsm_batch(model, ds.batch(idx), labels, FgsmConfig{eps});
      for (std::size_t j = 0; j < idx.size(); ++j) adv.push_back(unstack_one(attacked, j));
    }
    const Dataset adv_ds(std::move(adv), ds.labels(), ds.class_names());

    out.prepare();
    if (adv_ds.image_shape()[0] == 1) {
      save_idx(adv_ds, out.path("adv-images.idx"), out.path("adv-labels.idx"));
      out.track("adv-images.idx");
      out.track("adv-labels.idx");
    } else {
      fs::create_directories(out.path("adversarial"));
      out.track("adversarial");
      std::string csv = "filename,label_index\n";
      for (std::size_t i = 0; i < adv_ds.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "img-%06zu.png", i);
        save_png(adv_ds.image(i), out.path("adversarial") / name);
        csv += std::string(name) + "," + std::to_string(adv_ds.label(i)) + "\n";
      }
      write_file_atomic(out.path("adversarial") / "labels.csv", csv);
    }
    std::string names;
    for (const auto& n : adv_ds.class_names()) names += n + "\n";
    out.write("classes.txt", names);

    const EvalReport report =
        evaluate(model, adv_ds, dataset_id_of(cfg) + "+fgsm" + format_shortest(eps), model_id_of(cfg));
    for (ReportFormat f : formats) out.emit(report, f, "eval");
    ConfidenceReport conf;
    const ConfidenceReport clean = breakdowns(model, ds, cfg);
    const ConfidenceReport attacked = breakdowns(model, adv_ds, cfg, "-adv");
    for (std::size_t i = 0; i < clean.size(); ++i) {
      conf.push_back(clean[i]);
      conf.push_back(attacked[i]);
    }
    if (!conf.empty())
      for (ReportFormat f : formats) out.emit(conf, f, "confidence");
  };
  return job;
}

Job plan_sweep(const json& cfg) {
  Model model = load_checkpoint(str(cfg, "checkpoint"));
  Dataset ds = load_data(cfg, &model);
  const auto formats = formats_of(cfg);
  const auto eps = eps_of(cfg);
  Job job;
  job.write = [=](Outputs& out) {
    const SweepTable table = epsilon_sweep(model, ds, eps);
    for (ReportFormat f : formats) out.emit(table, f, "sweep");
  };
  return job;
}

Job plan_patch_train(const json& cfg, std::ostream& log) {
  Model model = load_checkpoint(str(cfg, "checkpoint"));
  Dataset ds = load_data(cfg, &model);
  const auto target = cfg.at("target_class").get<std::int64_t>();
  if (target >= static_cast<std::int64_t>(model.num_classes()))
    fail(Errc::out_of_range, "target class " + std::to_string(target) + " but the model has " +
                                 std::to_string(model.num_classes()) + " classes");
  const auto sizes = cfg.at("sizes").get<std::vector<std::size_t>>();
  const Shape shape = ds.image_shape();
  for (std::size_t s : sizes)
    if (s > shape[1] || s > shape[2])
      fail(Errc::out_of_range, "patch size " + std::to_string(s) + " does not fit images " + shape.str());
  PatchTrainConfig base;
  base.target_class = static_cast<int>(target);
  base.steps = cfg.at("steps").get<std::size_t>();
  base.learning_rate = cfg.at("learning_rate").get<double>();
  base.batch_size = cfg.at("batch_size").get<std::size_t>();
  base.seed = cfg.at("seed").get<std::uint64_t>();
  base.placement = placement_from_string(str(cfg, "placement"));
  const std::string name = str(cfg, "name");
  Job job;
  job.seeds = {{"patch", base.seed}};
  job.write = [=, &log](Outputs& out) {
    for (std::size_t s : sizes) {
      PatchTrainConfig c = base;
      c.size = s;
      c.name = name + "-" + std::to_string(s);
      const PatchTrainResult r = train_patch(model, ds, c);
      std::string curve = "step,objective\n";
      for (std::size_t i = 0; i < r.objective.size(); ++i)
        curve += std::to_string(i + 1) + "," + format_shortest(r.objective[i]) + "\n";
      log << c.name << ": final objective " << format_fixed(r.objective.back(), 4) << "\n";
      out.write(c.name + ".patch", encode_patch(r.patch));
      out.write(c.name + "-objective.csv", curve);
      out.prepare();
      save_png(r.patch.pixels, out.path(c.name + ".png"));
      out.track(c.name + ".png");
    }
  };
  return job;
}

Job plan_patch_eval(const json& cfg) {
  Model model = load_checkpoint(str(cfg, "checkpoint"));
  Dataset ds = load_data(cfg, &model);
  std::vector<Patch> patches;
  for (const json& p : cfg.at("patches")) {
    Patch patch = load_patch(p.get<std::string>());
    if (patch.target_class >= static_cast<int>(model.num_classes()))
      fail(Errc::out_of_range, p.get<std::string>() + ": target class outside the model's classes");
    if (patch.channels() != ds.image_shape()[0] || patch.size() > ds.image_shape()[1] ||
        patch.size() > ds.image_shape()[2])
      fail(Errc::shape_mismatch, p.get<std::string>() + ": patch " + patch.pixels.shape().str() +
                                     " does not fit images " + ds.image_shape().str());
    patches.push_back(std::move(patch));
  }
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const auto policy = placement_from_string(str(cfg, "placement"));
  const bool exclude = cfg.at("exclude_target").get<bool>();
  const auto formats = formats_of(cfg);
  Job job;
  job.seeds = {{"placement", seed}};
  job.write = [=](Outputs& out) {
    PatchReport report;
    for (const Patch& p : patches)
      report.rows.push_back(patch_eval(model, exclude ? without_label(ds, p.target_class) : ds, p, seed, policy));
    for (ReportFormat f : formats) out.emit(report, f, "patch_report");
  };
  return job;
}

Job plan_report(const json& cfg) {
  const std::string input = str(cfg, "input");
  const Report report = parse_report(read_file(input));
  const auto formats = formats_of(cfg);
  const std::string stem = fs::path(input).stem().string();
  Job job;
  job.write = [=](Outputs& out) {
    for (ReportFormat f : formats) out.emit(report, f, stem);
  };
  return job;
}

bool is_validation_error(Errc code) {
  switch (code) {
    case Errc::invalid_argument:
    case Errc::out_of_range:
    case Errc::shape_mismatch:
    case Errc::dimension_mismatch:
    case Errc::unknown_format:
      return true;
    default:
      return false;
  }
}

struct FlagSlot {
  Key key;
  std::vector<std::string> values;
  bool flag = false;
  CLI::Option* option = nullptr;
};

}  // namespace

std::vector<double> parse_eps(const std::string& text) {
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    const auto first = text.find(':');
    const auto second = text.find(':', first + 1);
    if (second == std::string::npos || text.find(':', second + 1) != std::string::npos)
      fail(Errc::invalid_argument, "epsilon range must be start:stop:step, got \"" + text + "\"");
    const double start = parse_double(text.substr(0, first), "epsilon range start");
    const double stop = parse_double(text.substr(first + 1, second - first - 1), "epsilon range stop");
    const double step = parse_double(text.substr(second + 1), "epsilon range step");
    if (!(step > 0.0)) fail(Errc::invalid_argument, "epsilon range step must be positive");
    if (stop < start) fail(Errc::invalid_argument, "epsilon range stop is below its start");
    constexpr double kTolerance = 1e-9;
    constexpr std::size_t kMaxPoints = 100000;
    for (std::size_t i = 0;; ++i) {
      const double v = start + static_cast<double>(i) * step;
      if (v > stop + kTolerance) break;
      if (out.size() == kMaxPoints) fail(Errc::invalid_argument, "epsilon range has too many points");
      out.push_back(std::round(v * 1e9) / 1e9);
    }
    return out;
  }
  for (const auto& part : split_commas(text)) out.push_back(parse_double(part, "epsilon"));
  return out;
}

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarial-attack toolkit: train a victim CNN, attack it with FGSM and adversarial patches, "
               "and report the results.",
               "advkit"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", std::string(ADVKIT_VERSION));

  std::map<std::string, std::deque<FlagSlot>> slots;
  std::map<std::string, std::string> config_path, out_dir;
  std::map<std::string, unsigned> threads;
  const std::map<std::string, std::string> blurbs{
      {"train", "train the default victim CNN on a dataset"},
      {"eval", "clean top-1/top-5 error and per-image confidences"},
      {"fgsm", "FGSM-perturb a dataset at one epsilon and score it"},
      {"sweep", "top-1/top-5 error across a list of epsilons"},
      {"patch-train", "train adversarial patches of several sizes"},
      {"patch-eval", "target-class success of trained patches"},
      {"report", "re-render a JSON report as csv/json/svg"}};
  for (const auto& sub : kSubcommands) {
    CLI::App* cmd = app.add_subcommand(sub, blurbs.at(sub));
    cmd->add_option("--config", config_path[sub], "JSON config or a previous run's manifest.json");
    cmd->add_option("--out-dir", out_dir[sub], "directory for every output of the run")->required();
    threads[sub] = 1;
    cmd->add_option("--threads", threads[sub], "worker threads (results do not depend on it)")
        ->check(CLI::Range(1u, 1024u));
    for (const Key& key : keys_for(sub)) {
      FlagSlot& slot = slots[sub].emplace_back();
      slot.key = key;
      if (key.kind == Kind::boolean)
        slot.option = cmd->add_flag(key.flag, slot.flag, key.help);
      else if (key.kind == Kind::strings || key.kind == Kind::uints)
        slot.option = cmd->add_option(key.flag, slot.values, key.help);
      else
        slot.option = cmd->add_option(key.flag, slot.values, key.help)->expected(1);
    }
  }

  std::vector<std::string> argv(args.rbegin(), args.rend());  // CLI11 wants reversed order
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << ADVKIT_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitInvalid;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  json cfg = json::object();
  Job job;
  try {
    try {
      for (const Key& key : keys_for(sub)) cfg[key.name] = key.fallback;
      if (!config_path[sub].empty()) {
        json file;
        try {
          file = json::parse(read_file(config_path[sub]));
        } catch (const json::exception& e) {
          invalid(config_path[sub] + " is not valid JSON: " + e.what());
        }
        if (!file.is_object()) invalid(config_path[sub] + " must hold a JSON object");
        if (file.contains("subcommand") && file.contains("config")) {
          if (file["subcommand"] != sub)
            invalid(config_path[sub] + " is a manifest for \"" + file["subcommand"].get<std::string>() +
                    "\", not \"" + sub + "\"");
          file = file["config"];
          if (!file.is_object()) invalid(config_path[sub] + ": manifest config must be an object");
        }
        const auto keys = keys_for(sub);
        for (const auto& [name, value] : file.items()) {
          const auto it = std::find_if(keys.begin(), keys.end(), [&](const Key& k) { return k.name == name; });
          if (it == keys.end()) invalid(config_path[sub] + ": unknown setting \"" + name + "\" for " + sub);
          cfg[name] = convert_json(*it, value);
        }
      }
      for (FlagSlot& slot : slots[sub]) {
        if (slot.option->count() == 0) continue;
        cfg[slot.key.name] = slot.key.kind == Kind::boolean ? json(slot.flag) : convert_flag(slot.key, slot.values);
      }
      if (fs::exists(out_dir[sub]) && !fs::is_directory(out_dir[sub]))
        invalid("--out-dir " + out_dir[sub] + " exists and is not a directory");
      validate_settings(sub, cfg);

      set_thread_count(threads[sub]);
      if (sub == "train") job = plan_train(cfg, out);
      else if (sub == "eval") job = plan_eval(cfg);
      else if (sub == "fgsm") job = plan_fgsm(cfg);
      else if (sub == "sweep") job = plan_sweep(cfg);
      else if (sub == "patch-train") job = plan_patch_train(cfg, out);
      else if (sub == "patch-eval") job = plan_patch_eval(cfg);
      else job = plan_report(cfg);
    } catch (const Error& e) {
      if (!is_validation_error(e.code())) throw;
      invalid(e.what());
    }
  } catch (const Invalid& e) {
    err << "error: " << e.what() << "\n\n" << app.get_subcommands().front()->help();
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailed;
  }

  Outputs outputs(out_dir[sub], out);
  try {
    job.write(outputs);
    const json manifest = {{"subcommand", sub},
                           {"config", cfg},
                           {"seeds", job.seeds},
                           {"version", ADVKIT_VERSION},
                           {"input_digests", input_digests(sub, cfg)}};
    outputs.write("manifest.json", manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    outputs.discard();
    err << "error: " << e.what() << "\n";
    return kExitFailed;
  }
  return kExitOk;
}

int run_digits(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Write a synthetic handwritten-digits corpus as IDX files.", "advkit-digits"};
  SynthDigitsConfig cfg;
  double test_fraction = 1.0 / 6.0;
  std::uint64_t split_seed = 1;
  std::string out_dir;
  app.add_option("--count", cfg.count, "total images (train + test)")->check(CLI::Range(2ul, 10000000ul));
  app.add_option("--seed", cfg.seed, "rendering seed");
  app.add_option("--size", cfg.image_size, "image side in pixels")->check(CLI::Range(8ul, 256ul));
  app.add_option("--test-fraction", test_fraction, "share of images in the test files")
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--split-seed", split_seed, "train/test shuffle seed");
  app.add_option("--out-dir", out_dir, "output directory")->required();
  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitInvalid;
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    err << "error: --test-fraction must lie strictly between 0 and 1\n";
    return kExitInvalid;
  }
  try {
    const Dataset all = synth_digits(cfg);
    auto [train_set, test_set] = split(all, test_fraction, split_seed);
    fs::create_directories(out_dir);
    const fs::path dir = out_dir;
    save_idx(train_set, dir / "train-images.idx", dir / "train-labels.idx");
    save_idx(test_set, dir / "test-images.idx", dir / "test-labels.idx");
    save_class_names(dir / "classes.txt", all.class_names());
    out << "wrote " << train_set.size() << " training and " << test_set.size() << " test images to " << out_dir
        << "\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailed;
  }
  return kExitOk;
}

}  // namespace advkit::cli
