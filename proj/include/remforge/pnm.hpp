// SPDX-License-Identifier: Apache-2.0
//
// remforge: radio environment map prediction toolkit
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

// Binary PGM (P5) reader/writer.
//
// 8-bit rasters are plain P5. 16-bit rasters (maxval > 255) store every sample as two
// bytes, LEAST significant byte first. Note that this differs from the Netpbm
// convention (most significant first); files written here are read back by
// read_pgm16 only.

#ifndef REMFORGE_PNM_HPP
#define REMFORGE_PNM_HPP

#include "core.hpp"

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

namespace remforge::pnm {

namespace detail {

struct Header
{
    std::size_t width = 0;
    std::size_t height = 0;
    unsigned maxval = 0;
    std::size_t data_offset = 0;
};

inline Header parse_header(const std::string &buf, const std::string &path)
{
    auto fail = [&](const std::string &what) { throw Error("format", path + ": " + what); };
    if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5')
        fail("not a binary PGM (missing P5 magic)");
    std::size_t pos = 2;
    auto next_token = [&]() -> unsigned long {
        for (;;) {
            while (pos < buf.size() && std::isspace(static_cast<unsigned char>(buf[pos])))
                ++pos;
            if (pos < buf.size() && buf[pos] == '#') {
                while (pos < buf.size() && buf[pos] != '\n')
                    ++pos;
                continue;
            }
            break;
        }
        const std::size_t start = pos;
        while (pos < buf.size() && std::isdigit(static_cast<unsigned char>(buf[pos])))
            ++pos;
        if (start == pos)
            fail("malformed header");
        if (pos - start > 9)
            fail("header value too large");
        return std::stoul(buf.substr(start, pos - start));
    };
    Header h;
    h.width = next_token();
    h.height = next_token();
    h.maxval = static_cast<unsigned>(next_token());
    if (pos >= buf.size() || !std::isspace(static_cast<unsigned char>(buf[pos])))
        fail("missing whitespace after maxval");
    h.data_offset = pos + 1;
    if (h.width == 0 || h.height == 0)
        fail("zero dimension");
    if (h.maxval == 0 || h.maxval > 65535)
        fail("maxval out of range");
    const std::size_t bytes = h.width * h.height * (h.maxval > 255 ? 2 : 1);
    if (buf.size() - h.data_offset < bytes)
        fail("truncated pixel data");
    return h;
}

inline std::string read_file(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("io", "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path &path, const std::string &bytes)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("io", "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string header_text(std::size_t w, std::size_t h, unsigned maxval)
{
    std::ostringstream os;
    os << "P5\n" << w << ' ' << h << '\n' << maxval << '\n';
    return os.str();
}

} // namespace detail

inline std::string encode_pgm8(const Grid<std::uint8_t> &img)
{
    std::string out = detail::header_text(img.width(), img.height(), 255);
    out.append(reinterpret_cast<const char *>(img.data().data()), img.size());
    return out;
}

inline std::string encode_pgm16(const Grid<std::uint16_t> &img, unsigned maxval = 65535)
{
    require(maxval > 255 && maxval <= 65535, "16-bit PGM needs maxval in (255, 65535]");
    std::string out = detail::header_text(img.width(), img.height(), maxval);
    out.reserve(out.size() + 2 * img.size());
    for (std::uint16_t v : img) {
        require(v <= maxval, "sample exceeds maxval");
        out.push_back(static_cast<char>(v & 0xFF));
        out.push_back(static_cast<char>(v >> 8));
    }
    return out;
}

inline Grid<std::uint8_t> decode_pgm8(const std::string &buf, const std::string &name = "<memory>")
{
    const auto h = detail::parse_header(buf, name);
    if (h.maxval > 255)
        throw Error("format", name + ": expected an 8-bit PGM");
    Grid<std::uint8_t> img(h.width, h.height);
    std::copy_n(reinterpret_cast<const std::uint8_t *>(buf.data() + h.data_offset), img.size(), img.data().begin());
    for (auto v : img)
        if (v > h.maxval)
            throw Error("format", name + ": sample exceeds maxval");
    return img;
}

inline Grid<std::uint16_t> decode_pgm16(const std::string &buf, const std::string &name = "<memory>")
{
    const auto h = detail::parse_header(buf, name);
    if (h.maxval <= 255)
        throw Error("format", name + ": expected a 16-bit PGM");
    Grid<std::uint16_t> img(h.width, h.height);
    const auto *p = reinterpret_cast<const std::uint8_t *>(buf.data() + h.data_offset);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const std::uint16_t v = static_cast<std::uint16_t>(p[2 * i] | (p[2 * i + 1] << 8));
        if (v > h.maxval)
            throw Error("format", name + ": sample exceeds maxval");
        img.data()[i] = v;
    }
    return img;
}

inline void write_pgm8(const std::filesystem::path &path, const Grid<std::uint8_t> &img)
{
    detail::write_file(path, encode_pgm8(img));
}

inline void write_pgm16(const std::filesystem::path &path, const Grid<std::uint16_t> &img, unsigned maxval = 65535)
{
    detail::write_file(path, encode_pgm16(img, maxval));
}

inline Grid<std::uint8_t> read_pgm8(const std::filesystem::path &path)
{
    return decode_pgm8(detail::read_file(path), path.string());
}

inline Grid<std::uint16_t> read_pgm16(const std::filesystem::path &path)
{
    return decode_pgm16(detail::read_file(path), path.string());
}

} // namespace remforge::pnm

#endif
