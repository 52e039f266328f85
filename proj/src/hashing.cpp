// Copyright 2026 the isoret authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "isoret/hashing.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>

#include "isoret/binary_io.hpp"

namespace isoret {

std::string sha256_hex(std::span<const char> bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
        throw Error(ErrorCategory::data, "sha256 digest failed");
    }
    std::string hex(2 * length, '0');
    for (unsigned int i = 0; i < length; ++i) {
        std::snprintf(hex.data() + 2 * i, 3, "%02x", digest[i]);
    }
    return hex;
}

std::string sha256_hex(std::string_view text) {
    return sha256_hex(std::span<const char>(text.data(), text.size()));
}

std::string sha256_file(const std::filesystem::path& path) {
    return sha256_hex(io::read_file(path));
}

}  // namespace isoret
