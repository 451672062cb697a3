#include <cstring>

#include "adi/errors.hpp"
#include "adi/training.hpp"
#include "binary_io.hpp"
#include "file_io.hpp"
#include "json_io.hpp"

namespace adi::train {

using detail::json;
using num::Matrix;

namespace {

json model_config_to_json(const model::ModelConfig& c) {
  return {{"layers", c.layers},
          {"heads", c.heads},
          {"head_dim", c.head_dim},
          {"kind", image::to_string(c.kind)},
          {"image_blocks", c.image_blocks},
          {"feature_channels", c.feature_channels},
          {"max_frames", c.max_frames},
          {"mlp_hidden", c.mlp_hidden}};
}

model::ModelConfig model_config_from_json(const json& j) {
  model::ModelConfig c;
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.head_dim = j.at("head_dim").get<std::size_t>();
  const auto kind = j.at("kind").get<std::string>();
  bool found = false;
  for (auto k : {image::ImageKind::action, image::ImageKind::start, image::ImageKind::end, image::ImageKind::combined}) {
    if (kind == image::to_string(k)) {
      c.kind = k;
      found = true;
    }
  }
  if (!found) throw FormatError("unknown image kind " + kind);
  c.image_blocks = j.at("image_blocks").get<std::vector<std::size_t>>();
  c.feature_channels = j.at("feature_channels").get<std::size_t>();
  c.max_frames = j.at("max_frames").get<std::size_t>();
  c.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
  return c;
}

void put_blob(std::string& out, const std::string& name, const Matrix& m) {
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.data()) detail::put_le<double>(out, v);
}

void get_blob(detail::Reader& r, const std::string& expect_name, Matrix& into, const std::string& what) {
  const auto len = r.get<std::uint32_t>();
  const std::string name(r.take(len));
  if (name != expect_name) throw FormatError(what + ": expected blob \"" + expect_name + "\", found \"" + name + "\"");
  const auto rows = r.get<std::uint32_t>();
  const auto cols = r.get<std::uint32_t>();
  if (rows != into.rows() || cols != into.cols()) {
    throw FormatError(what + ": blob \"" + name + "\" is " + std::to_string(rows) + "x" + std::to_string(cols) +
                      ", expected " + std::to_string(into.rows()) + "x" + std::to_string(into.cols()));
  }
  for (double& v : into.data()) v = r.get<double>();
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  const json header = {
      {"train_config", json::parse(to_json_text(c.config))},
      {"model_config", model_config_to_json(c.model.config)},
      {"schedule",
       {{"T", c.config.T},
        {"beta_min", c.config.beta_min},
        {"beta_max", c.config.beta_max},
        {"K", c.config.K},
        {"sigma", c.config.sigma}}},
      {"epoch", c.epoch},
      {"adam_step", c.adam.step},
      {"rng", {{"key", c.rng.key}, {"counter", c.rng.counter}}},
      {"blobs", c.model.params.size() * 3},
  };
  const std::string h = header.dump();
  std::string out = "ADIC";
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  const auto& ps = c.model.params;
  for (std::size_t i = 0; i < ps.size(); ++i) put_blob(out, ps[i].name, ps[i].value);
  for (std::size_t i = 0; i < ps.size(); ++i) put_blob(out, "adam.m/" + ps[i].name, c.adam.m[i]);
  for (std::size_t i = 0; i < ps.size(); ++i) put_blob(out, "adam.v/" + ps[i].name, c.adam.v[i]);
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& what) {
  detail::Reader r(bytes, what);
  if (r.take(4) != "ADIC") throw FormatError(what + ": bad magic, not an ADIC checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError(what + ": unsupported checkpoint version " + std::to_string(version) + " (this build reads " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto hlen = r.get<std::uint32_t>();
  json header;
  try {
    header = json::parse(r.take(hlen));
  } catch (const json::parse_error& e) {
    throw FormatError(what + ": corrupt header: " + e.what());
  }

  Checkpoint c;
  try {
    c.config = train_config_from_json_text(header.at("train_config").dump());
    const auto mc = model_config_from_json(header.at("model_config"));
    mc.validate();
    // Parameter names, shapes and decay flags come from the architecture.
    num::Rng scratch(0);
    c.model = model::init_model(mc, scratch);
    c.epoch = header.at("epoch").get<std::size_t>();
    c.adam = AdamState::zeros_like(c.model.params);
    c.adam.step = header.at("adam_step").get<std::uint64_t>();
    c.rng.key = header.at("rng").at("key").get<std::uint64_t>();
    c.rng.counter = header.at("rng").at("counter").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(what + ": malformed header: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(what + ": invalid configuration in header: " + e.what());
  }
  auto& ps = c.model.params;
  for (std::size_t i = 0; i < ps.size(); ++i) get_blob(r, ps[i].name, ps[i].value, what);
  for (std::size_t i = 0; i < ps.size(); ++i) get_blob(r, "adam.m/" + ps[i].name, c.adam.m[i], what);
  for (std::size_t i = 0; i < ps.size(); ++i) get_blob(r, "adam.v/" + ps[i].name, c.adam.v[i], what);
  if (r.remaining() != 0) throw FormatError(what + ": " + std::to_string(r.remaining()) + " trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  detail::write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(detail::read_file(path), path.string());
}

}  // namespace adi::train
