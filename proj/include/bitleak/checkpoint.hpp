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

#ifndef BITLEAK_CHECKPOINT_HPP
#define BITLEAK_CHECKPOINT_HPP

#include <string>

#include "json.hpp"

#include "bitleak/network.hpp"
#include "bitleak/ptq.hpp"

namespace bitleak {

// JSON persistence for networks and quantized networks. Doubles round-trip
// exactly (shortest-representation serialization), so a loaded model is
// value-identical to the saved one. Keys are sorted, so serialization is
// byte-deterministic.

nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);

nlohmann::json quantized_to_json(const QuantizedNetwork& qn);
QuantizedNetwork quantized_from_json(const nlohmann::json& j);

// Wraps the payload in {"format": "bitleak-checkpoint-v1", "meta": meta,
// "network"/"quant": ...} and writes it. Loading validates the format tag
// (FormatError on mismatch) and the network itself.
void save_network(const std::string& path, const Network& net,
                  const nlohmann::json& meta = nlohmann::json::object());
Network load_network(const std::string& path);

void save_quantized(const std::string& path, const QuantizedNetwork& qn,
                    const nlohmann::json& meta = nlohmann::json::object());
QuantizedNetwork load_quantized(const std::string& path);

// Reads the "meta" object of either checkpoint flavor.
nlohmann::json load_meta(const std::string& path);

}  // namespace bitleak

#endif  // BITLEAK_CHECKPOINT_HPP
