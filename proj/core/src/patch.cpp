#include "advkit/patch.hpp"

#include <algorithm>
#include <cmath>

#include "advkit/error.hpp"
#include "advkit/io.hpp"
#include "advkit/layers.hpp"
#include "advkit/parallel.hpp"
#include "advkit/rng.hpp"
#include "batching.hpp"
#include "container.hpp"

namespace advkit {

void Patch::validate() const {
  if (pixels.rank() != 3 || pixels.dim(1) != pixels.dim(2))
    fail(Errc::shape_mismatch, "patch pixels must be [C,s,s], got " + pixels.shape().str());
  for (float v : pixels.data())
    if (!(v >= 0.0f && v <= 1.0f)) fail(Errc::out_of_range, "patch pixel outside [0,1]");
  if (target_class < 0) fail(Errc::out_of_range, "negative target class");
}

std::string to_string(PlacementPolicy policy) {
  return policy == PlacementPolicy::uniform ? "uniform" : "center";
}

PlacementPolicy placement_from_string(const std::string& text) {
  if (text == "uniform") return PlacementPolicy::uniform;
  if (text == "center") return PlacementPolicy::center;
  fail(Errc::invalid_argument, "unknown placement policy \"" + text + "\"");
}

namespace {

void require_fits(const Shape& image, std::size_t channels, std::size_t size) {
  if (image.rank() != 3)
    fail(Errc::shape_mismatch, "expected an image [C,H,W], got " + image.str());
  if (image[0] != channels)
    fail(Errc::shape_mismatch, "patch has " + std::to_string(channels) + " channels, image " +
                                   image.str());
  if (size == 0 || size > image[1] || size > image[2])
    fail(Errc::out_of_range, "patch side " + std::to_string(size) + " does not fit image " +
                                 image.str());
}

void require_target(const Model& model, int target) {
  if (target < 0 || static_cast<std::size_t>(target) >= model.num_classes())
    fail(Errc::out_of_range, "target class " + std::to_string(target) + " outside [0, " +
                                 std::to_string(model.num_classes()) + ")");
}

// Writes the patch into row `b` of a raw batch [N,C,H,W].
void paste(Tensor& batch, std::size_t b, const Tensor& pixels, Placement at) {
  const std::size_t c = batch.dim(1), h = batch.dim(2), w = batch.dim(3), s = pixels.dim(1);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x)
        batch[((b * c + ch) * h + at.row + y) * w + at.col + x] = pixels[(ch * s + y) * s + x];
}

}  // namespace

Tensor apply_patch(const Tensor& image, const Patch& patch, Placement at) {
  require_fits(image.shape(), patch.channels(), patch.size());
  const std::size_t s = patch.size();
  if (at.row + s > image.dim(1) || at.col + s > image.dim(2))
    fail(Errc::out_of_range, "patch of side " + std::to_string(s) + " at (" +
                                 std::to_string(at.row) + ", " + std::to_string(at.col) +
                                 ") leaves image " + image.shape().str());
  Tensor out = image.reshaped(Shape{1, image.dim(0), image.dim(1), image.dim(2)});
  paste(out, 0, patch.pixels, at);
  return std::move(out).reshaped(image.shape());
}

PatchTrainResult train_patch(const Model& model, const Dataset& train_set,
                             const PatchTrainConfig& config) {
  if (train_set.empty()) fail(Errc::invalid_argument, "train_patch: empty dataset");
  if (config.steps == 0 || config.batch_size == 0)
    fail(Errc::invalid_argument, "train_patch: steps and batch_size must be positive");
  if (!(config.learning_rate > 0.0))
    fail(Errc::invalid_argument, "train_patch: learning rate must be positive");
  require_target(model, config.target_class);
  const Shape& shape = train_set.image_shape();
  require_fits(shape, shape[0], config.size);

  const std::size_t c = shape[0], h = shape[1], w = shape[2], s = config.size;
  Rng init(derive_seed(config.seed, 0));
  Tensor pixels(Shape{c, s, s});
  for (float& v : pixels.data()) v = static_cast<float>(init.uniform());

  Rng sampler(derive_seed(config.seed, 1));
  const NormalizationSpec& norm = model.normalization();
  const std::vector<int> labels(config.batch_size, config.target_class);
  const auto lr = static_cast<float>(config.learning_rate / static_cast<double>(config.batch_size));

  PatchTrainResult result;
  result.objective.reserve(config.steps);
  std::vector<std::size_t> picks(config.batch_size);
  std::vector<Placement> where(config.batch_size);
  for (std::size_t step = 0; step < config.steps; ++step) {
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      picks[b] = static_cast<std::size_t>(sampler.below(train_set.size()));
      where[b] = draw_placement(sampler, config.placement, s, h, w);
    }
    Tensor batch = train_set.batch(picks);
    for (std::size_t b = 0; b < config.batch_size; ++b) paste(batch, b, pixels, where[b]);

    // Summed cross-entropy toward the target is minus the summed target
    // log-probability, so ascent on the objective descends this gradient.
    LossAndGradient g = detail::chunked_input_gradient(model, normalize(batch, norm), labels);
    result.objective.push_back(-g.loss / static_cast<double>(config.batch_size));

    Tensor ascent(pixels.shape());
    for (std::size_t b = 0; b < config.batch_size; ++b)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const float sd = norm.stddev()[ch];
        for (std::size_t y = 0; y < s; ++y)
          for (std::size_t x = 0; x < s; ++x)
            ascent[(ch * s + y) * s + x] -=
                g.gradient[((b * c + ch) * h + where[b].row + y) * w + where[b].col + x] / sd;
      }
    for (std::size_t i = 0; i < pixels.numel(); ++i)
      pixels[i] = std::clamp(pixels[i] + lr * ascent[i], 0.0f, 1.0f);
  }

  result.patch.pixels = std::move(pixels);
  result.patch.target_class = config.target_class;
  result.patch.name = config.name;
  result.patch.steps = config.steps;
  result.patch.seed = config.seed;
  result.patch.learning_rate = config.learning_rate;
  result.patch.batch_size = config.batch_size;
  result.patch.validate();
  return result;
}

void PatchReport::validate() const {
  for (const auto& r : rows) {
    for (double v : {r.top1_success, r.top5_success})
      if (!(v >= 0.0 && v <= 100.0)) fail(Errc::out_of_range, "patch success outside [0, 100]");
    if (r.top5_success < r.top1_success)
      fail(Errc::invalid_argument, "patch \"" + r.patch + "\" has top-5 success below top-1");
  }
}

PatchReportRow patch_eval(const Model& model, const Dataset& dataset, const Patch& patch,
                          std::uint64_t seed, PlacementPolicy policy) {
  if (dataset.empty()) fail(Errc::invalid_argument, "patch_eval: empty dataset");
  patch.validate();
  require_target(model, patch.target_class);
  const Shape& shape = dataset.image_shape();
  require_fits(shape, patch.channels(), patch.size());

  Rng rng(seed);
  std::vector<Placement> where(dataset.size());
  for (auto& p : where) p = draw_placement(rng, policy, patch.size(), shape[1], shape[2]);

  const std::size_t k = model.num_classes();
  const std::size_t k5 = std::min<std::size_t>(5, k);
  const auto chunks = detail::make_chunks(dataset.size());
  std::vector<std::pair<std::size_t, std::size_t>> hits(chunks.size());
  parallel_for(chunks.size(), [&](std::size_t ci) {
    const auto idx = chunks[ci].indices();
    Tensor batch = dataset.batch(idx);
    for (std::size_t r = 0; r < idx.size(); ++r) paste(batch, r, patch.pixels, where[idx[r]]);
    const Tensor probs = predict_proba(model, batch);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto top = top_indices(probs.data().subspan(r * k, k), k5);
      if (top[0] == patch.target_class) ++hits[ci].first;
      if (std::find(top.begin(), top.end(), patch.target_class) != top.end()) ++hits[ci].second;
    }
  });
  std::size_t h1 = 0, h5 = 0;
  for (const auto& [a, b] : hits) {
    h1 += a;
    h5 += b;
  }
  const double n = static_cast<double>(dataset.size());
  return {patch.name, patch.size(), 100.0 * static_cast<double>(h1) / n,
          100.0 * static_cast<double>(h5) / n};
}

std::string encode_patch(const Patch& patch) {
  patch.validate();
  nlohmann::json header = {
      {"kind", "patch"},          {"name", patch.name},
      {"target_class", patch.target_class}, {"size", patch.size()},
      {"channels", patch.channels()},       {"steps", patch.steps},
      {"seed", patch.seed},                 {"learning_rate", patch.learning_rate},
      {"batch_size", patch.batch_size},
  };
  return detail::encode_container("GSTP", std::move(header), {{"pixels", patch.pixels}});
}

Patch decode_patch(std::string_view bytes, const std::string& source) {
  using detail::header_field;
  auto decoded = detail::decode_container(bytes, "GSTP", source);
  const auto& h = decoded.header;
  if (header_field<std::string>(h, "kind", source) != "patch")
    fail(Errc::corrupt_header, source + ": not a patch file");
  if (decoded.tensors.size() != 1 || decoded.tensors[0].name != "pixels")
    fail(Errc::corrupt_header, source + ": expected one tensor named \"pixels\"");
  Patch p;
  p.pixels = std::move(decoded.tensors[0].value);
  p.name = header_field<std::string>(h, "name", source);
  p.target_class = header_field<int>(h, "target_class", source);
  p.steps = header_field<std::size_t>(h, "steps", source);
  p.seed = header_field<std::uint64_t>(h, "seed", source);
  p.learning_rate = header_field<double>(h, "learning_rate", source);
  p.batch_size = header_field<std::size_t>(h, "batch_size", source);
  try {
    p.validate();
  } catch (const Error& e) {
    fail(Errc::corrupt_header, source + ": " + e.what());
  }
  if (header_field<std::size_t>(h, "size", source) != p.size() ||
      header_field<std::size_t>(h, "channels", source) != p.channels())
    fail(Errc::corrupt_header, source + ": header size/channels disagree with pixel tensor");
  return p;
}

void save_patch(const Patch& patch, const std::filesystem::path& path) {
  write_file_atomic(path, encode_patch(patch));
}

Patch load_patch(const std::filesystem::path& path) {
  return decode_patch(read_file(path), path.string());
}

}  // namespace advkit
