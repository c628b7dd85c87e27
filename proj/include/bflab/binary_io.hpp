// SPDX-License-Identifier: Apache-2.0
//
// bflab - beamforming laboratory for weighted sum-rate precoding and learned beamformers
// Copyright (C) 2026 The bflab authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef BFLAB_BINARY_IO_HPP
#define BFLAB_BINARY_IO_HPP

// Little-endian primitives shared by the dataset and model file formats

#include "bflab/errors.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace bflab::io
{
    static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

    inline void write_magic(std::ostream &out, const char (&magic)[8]) { out.write(magic, 8); }

    inline void expect_magic(std::istream &in, const char (&magic)[8], const char *what)
    {
        char buf[8] = {};
        in.read(buf, 8);
        if (!in || std::memcmp(buf, magic, 8) != 0)
            throw FormatError(std::string("not a ") + what + " file (bad magic)");
    }

    inline void write_u8(std::ostream &out, std::uint8_t v) { out.put(static_cast<char>(v)); }

    inline void write_u64(std::ostream &out, std::uint64_t v)
    {
        out.write(reinterpret_cast<const char *>(&v), sizeof v);
    }

    inline void write_f64(std::ostream &out, double v)
    {
        out.write(reinterpret_cast<const char *>(&v), sizeof v);
    }

    template <typename T>
    T read_pod(std::istream &in)
    {
        T v{};
        in.read(reinterpret_cast<char *>(&v), sizeof v);
        if (!in)
            throw FormatError("unexpected end of file");
        return v;
    }

    inline std::uint8_t read_u8(std::istream &in) { return read_pod<std::uint8_t>(in); }
    inline std::uint64_t read_u64(std::istream &in) { return read_pod<std::uint64_t>(in); }
    inline double read_f64(std::istream &in) { return read_pod<double>(in); }

    // u64 byte length followed by UTF-8 JSON text
    inline void write_json_blob(std::ostream &out, const nlohmann::json &j)
    {
        const std::string text = j.dump();
        write_u64(out, text.size());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
    }

    inline nlohmann::json read_json_blob(std::istream &in)
    {
        const std::uint64_t len = read_u64(in);
        if (len > (std::uint64_t{1} << 26))
            throw FormatError("header blob too large");
        std::string text(len, '\0');
        in.read(text.data(), static_cast<std::streamsize>(len));
        if (!in)
            throw FormatError("truncated header blob");
        try
        {
            return nlohmann::json::parse(text);
        }
        catch (const nlohmann::json::exception &e)
        {
            throw FormatError(std::string("header is not valid JSON: ") + e.what());
        }
    }
}

#endif
