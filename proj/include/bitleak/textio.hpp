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

#ifndef BITLEAK_TEXTIO_HPP
#define BITLEAK_TEXTIO_HPP

#include <charconv>
#include <string>

#include "bitleak/error.hpp"

namespace bitleak {

// Shortest decimal string that round-trips the exact double. Every CSV and
// text artifact uses this one formatter so identical runs produce identical
// bytes.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Whole-file write followed by stream close; throws on failure.
void write_text_file(const std::string& path, const std::string& content);

// Write-to-temp-then-rename: the file at path is either absent, the old
// content, or the complete new content, never a prefix. Completion markers
// rely on this.
void write_text_file_atomic(const std::string& path,
                            const std::string& content);

std::string read_text_file(const std::string& path);

}  // namespace bitleak

#endif  // BITLEAK_TEXTIO_HPP
