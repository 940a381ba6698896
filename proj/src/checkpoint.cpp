/*
 * Copyright 2026 The Bitleak Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "bitleak/checkpoint.hpp"

#include "bitleak/error.hpp"
#include "bitleak/textio.hpp"

namespace bitleak {

namespace {

constexpr const char* kFormatTag = "bitleak-checkpoint-v1";

using nlohmann::json;

json tensor_to_json(const Tensor& t) {
  return json{{"shape", t.shape}, {"values", t.values}};
}

Tensor tensor_from_json(const json& j) {
  Tensor t;
  t.shape = j.at("shape").get<std::vector<std::size_t>>();
  t.values = j.at("values").get<std::vector<double>>();
  std::size_t expect = 1;
  for (std::size_t d : t.shape) expect *= d;
  if (t.shape.empty() || t.values.size() != expect) {
    throw FormatError("checkpoint tensor shape does not match value count");
  }
  return t;
}

json must(const json& j, const char* key) {
  if (!j.contains(key)) {
    throw FormatError(std::string("checkpoint missing key '") + key + "'");
  }
  return j.at(key);
}

json wrap(const char* payload_key, json payload, const json& meta) {
  json doc;
  doc["format"] = kFormatTag;
  doc["meta"] = meta;
  doc[payload_key] = std::move(payload);
  return doc;
}

json read_doc(const std::string& path) {
  std::string text = read_text_file(path);
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) {
    throw FormatError("checkpoint is not valid JSON: " + path);
  }
  if (!doc.contains("format") || doc["format"] != kFormatTag) {
    throw FormatError("checkpoint format tag missing or unknown: " + path);
  }
  return doc;
}

}  // namespace

json network_to_json(const Network& net) {
  json layers = json::array();
  for (const Layer& l : net.layers) {
    json jl;
    jl["name"] = l.name;
    jl["kind"] = layer_kind_label(l.kind);
    switch (l.kind) {
      case LayerKind::Affine:
        jl["W"] = tensor_to_json(l.W);
        jl["b"] = l.b;
        break;
      case LayerKind::BatchNorm:
        jl["gamma"] = l.gamma;
        jl["beta"] = l.beta;
        jl["running_mean"] = l.running_mean;
        jl["running_var"] = l.running_var;
        break;
      case LayerKind::ReLU:
      case LayerKind::Softmax:
        break;
    }
    layers.push_back(std::move(jl));
  }
  return json{{"input_dim", net.input_dim},
              {"output_dim", net.output_dim},
              {"layers", layers}};
}

Network network_from_json(const json& j) {
  Network net;
  net.input_dim = must(j, "input_dim").get<std::size_t>();
  net.output_dim = must(j, "output_dim").get<std::size_t>();
  for (const json& jl : must(j, "layers")) {
    Layer l;
    l.name = must(jl, "name").get<std::string>();
    l.kind = layer_kind_from_label(must(jl, "kind").get<std::string>());
    switch (l.kind) {
      case LayerKind::Affine:
        l.W = tensor_from_json(must(jl, "W"));
        l.b = must(jl, "b").get<std::vector<double>>();
        break;
      case LayerKind::BatchNorm:
        l.gamma = must(jl, "gamma").get<std::vector<double>>();
        l.beta = must(jl, "beta").get<std::vector<double>>();
        l.running_mean = must(jl, "running_mean").get<std::vector<double>>();
        l.running_var = must(jl, "running_var").get<std::vector<double>>();
        break;
      case LayerKind::ReLU:
      case LayerKind::Softmax:
        break;
    }
    net.layers.push_back(std::move(l));
  }
  net.validate();
  return net;
}

json quantized_to_json(const QuantizedNetwork& qn) {
  json pmap;
  pmap["default"] = bitwidth_label(qn.pmap.default_bits);
  json overrides = json::object();
  for (const auto& [name, bw] : qn.pmap.overrides) {
    overrides[name] = bitwidth_label(bw);
  }
  pmap["overrides"] = overrides;

  json qlayers = json::object();
  for (const auto& [name, q] : qn.layers) {
    json jq;
    jq["bitwidth"] = bitwidth_label(q.spec.bitwidth);
    jq["channels"] = q.channels;
    jq["width"] = q.width;
    jq["scale"] = q.spec.scale;
    jq["zero_point"] = q.spec.zero_point;
    jq["codes"] = q.codes;
    qlayers[name] = std::move(jq);
  }
  return json{{"network", network_to_json(qn.net)},
              {"pmap", pmap},
              {"layers", qlayers}};
}

QuantizedNetwork quantized_from_json(const json& j) {
  QuantizedNetwork qn;
  qn.net = network_from_json(must(j, "network"));
  json pmap = must(j, "pmap");
  qn.pmap.default_bits =
      bitwidth_from_label(must(pmap, "default").get<std::string>());
  json overrides = must(pmap, "overrides");
  for (const auto& [name, val] : overrides.items()) {
    qn.pmap.overrides[name] = bitwidth_from_label(val.get<std::string>());
  }
  json qlayers = must(j, "layers");
  for (const auto& [name, jq] : qlayers.items()) {
    QuantizedLayer q;
    q.spec.bitwidth =
        bitwidth_from_label(must(jq, "bitwidth").get<std::string>());
    q.channels = must(jq, "channels").get<std::size_t>();
    q.width = must(jq, "width").get<std::size_t>();
    q.spec.scale = must(jq, "scale").get<std::vector<double>>();
    q.spec.zero_point = must(jq, "zero_point").get<std::vector<double>>();
    q.codes = must(jq, "codes").get<std::vector<std::int32_t>>();
    if (q.codes.size() != q.channels * q.width ||
        q.spec.scale.size() != q.channels ||
        q.spec.zero_point.size() != q.channels) {
      throw FormatError("quantized layer '" + name + "' has inconsistent sizes");
    }
    qn.layers.emplace(name, std::move(q));
  }
  qn.pmap.validate(qn.net);
  return qn;
}

void save_network(const std::string& path, const Network& net,
                  const json& meta) {
  write_text_file(path, wrap("network", network_to_json(net), meta).dump());
}

Network load_network(const std::string& path) {
  return network_from_json(must(read_doc(path), "network"));
}

void save_quantized(const std::string& path, const QuantizedNetwork& qn,
                    const json& meta) {
  write_text_file(path, wrap("quant", quantized_to_json(qn), meta).dump());
}

QuantizedNetwork load_quantized(const std::string& path) {
  return quantized_from_json(must(read_doc(path), "quant"));
}

json load_meta(const std::string& path) { return read_doc(path)["meta"]; }

}  // namespace bitleak
