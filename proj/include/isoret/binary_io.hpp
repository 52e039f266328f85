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

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "isoret/error.hpp"

namespace isoret::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts need byte swapping");

/// Append-only little-endian encoder.
class ByteWriter {
public:
    void bytes(std::string_view s) { buffer_.insert(buffer_.end(), s.begin(), s.end()); }

    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        char raw[sizeof(T)];
        std::memcpy(raw, &value, sizeof(T));
        buffer_.insert(buffer_.end(), raw, raw + sizeof(T));
    }

    void f64s(std::span<const double> values) {
        const auto* p = reinterpret_cast<const char*>(values.data());
        buffer_.insert(buffer_.end(), p, p + values.size_bytes());
    }

    const std::vector<char>& buffer() const noexcept { return buffer_; }
    std::vector<char> release() noexcept { return std::move(buffer_); }

private:
    std::vector<char> buffer_;
};

/// Bounds-checked decoder; truncation raises FormatError naming `what`.
class ByteReader {
public:
    ByteReader(std::span<const char> data, std::string what)
        : data_(data), what_(std::move(what)) {}

    std::string_view bytes(std::size_t n) {
        require(n);
        std::string_view out(data_.data() + pos_, n);
        pos_ += n;
        return out;
    }

    template <typename T>
    T get() {
        static_assert(std::is_trivially_copyable_v<T>);
        require(sizeof(T));
        T value;
        std::memcpy(&value, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    void f64s(std::span<double> out) {
        require(out.size_bytes());
        std::memcpy(out.data(), data_.data() + pos_, out.size_bytes());
        pos_ += out.size_bytes();
    }

    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    std::size_t position() const noexcept { return pos_; }

private:
    void require(std::size_t n) const {
        if (n > data_.size() - pos_) {
            throw FormatError(what_ + ": truncated at byte " + std::to_string(pos_));
        }
    }

    std::span<const char> data_;
    std::string what_;
    std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const char> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace isoret::io
