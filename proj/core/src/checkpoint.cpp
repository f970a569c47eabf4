#include "advkit/checkpoint.hpp"

#include "advkit/error.hpp"
#include "advkit/io.hpp"
#include "container.hpp"

namespace advkit {

using nlohmann::json;

namespace {

json spec_to_json(const ArchitectureSpec& spec) {
  json layers = json::array();
  for (const LayerSpec& l : spec.layers) {
    json j = {{"kind", to_string(l.kind)}, {"name", l.name}};
    if (l.kind == LayerKind::conv) {
      j["out_channels"] = l.out_channels;
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
      j["pad"] = l.pad;
    } else if (l.kind == LayerKind::dense) {
      j["units"] = l.units;
    }
    layers.push_back(std::move(j));
  }
  json input = json::array();
  for (std::size_t d : spec.input_shape.dims()) input.push_back(d);
  return {{"layers", layers}, {"num_classes", spec.num_classes}, {"input_shape", input}};
}

ArchitectureSpec spec_from_json(const json& j, const std::string& what) {
  using detail::header_field;
  ArchitectureSpec spec;
  spec.num_classes = header_field<std::size_t>(j, "num_classes", what);
  const auto input = header_field<std::vector<std::size_t>>(j, "input_shape", what);
  try {
    spec.input_shape = Shape(std::span<const std::size_t>(input));
  } catch (const Error& e) {
    fail(Errc::corrupt_header, what + ": input_shape: " + e.what());
  }
  if (!j.contains("layers") || !j["layers"].is_array())
    fail(Errc::corrupt_header, what + ": architecture lacks layers");
  for (const json& lj : j["layers"]) {
    LayerSpec l;
    try {
      l.kind = layer_kind_from_string(header_field<std::string>(lj, "kind", what));
    } catch (const Error& e) {
      fail(Errc::corrupt_header, what + ": " + e.what());
    }
    l.name = header_field<std::string>(lj, "name", what);
    if (l.kind == LayerKind::conv) {
      l.out_channels = header_field<std::size_t>(lj, "out_channels", what);
      l.kernel = header_field<std::size_t>(lj, "kernel", what);
      l.stride = header_field<std::size_t>(lj, "stride", what);
      l.pad = header_field<std::size_t>(lj, "pad", what);
    } else if (l.kind == LayerKind::dense) {
      l.units = header_field<std::size_t>(lj, "units", what);
    }
    spec.layers.push_back(std::move(l));
  }
  return spec;
}

}  // namespace

std::string encode_checkpoint(const Model& model) {
  json header = {
      {"kind", "model"},
      {"architecture", spec_to_json(model.spec())},
      {"class_names", model.class_names()},
      {"normalization",
       {{"mean", model.normalization().mean()}, {"std", model.normalization().stddev()}}},
  };
  return detail::encode_container("GSTM", std::move(header),
                                  std::vector<NamedTensor>(model.params().begin(), model.params().end()));
}

Model decode_checkpoint(std::string_view bytes, const std::string& source) {
  using detail::header_field;
  auto decoded = detail::decode_container(bytes, "GSTM", source);
  const json& h = decoded.header;
  if (header_field<std::string>(h, "kind", source) != "model")
    fail(Errc::corrupt_header, source + ": not a model checkpoint");
  if (!h.contains("architecture")) fail(Errc::corrupt_header, source + ": no architecture");
  ArchitectureSpec spec = spec_from_json(h["architecture"], source);
  auto names = header_field<std::vector<std::string>>(h, "class_names", source);
  if (!h.contains("normalization")) fail(Errc::corrupt_header, source + ": no normalization");
  auto mean = header_field<std::vector<float>>(h["normalization"], "mean", source);
  auto stddev = header_field<std::vector<float>>(h["normalization"], "std", source);
  try {
    return Model(std::move(spec), std::move(decoded.tensors), std::move(names),
                 NormalizationSpec(std::move(mean), std::move(stddev)));
  } catch (const Error& e) {
    fail(Errc::corrupt_header, source + ": " + e.what());
  }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(model));
}

Model load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace advkit
