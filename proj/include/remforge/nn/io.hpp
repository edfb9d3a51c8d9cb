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

// Weight file layout (all integers and floats little-endian):
//
//   "REMU"                  4-byte magic
//   version                 u32 (currently 1)
//   header_length           u32
//   header                  JSON: {config, seed, tensors: [{name, shape}], extra}
//   tensor data             f64 values of every tensor in header order

#ifndef REMFORGE_NN_IO_HPP
#define REMFORGE_NN_IO_HPP

#include "unet.hpp"

#include "json.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace remforge::nn {

inline constexpr std::uint32_t weight_file_version = 1;

namespace detail {

template <typename T>
void put_le(std::string &out, T v)
{
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(b, b + sizeof(T));
    out.append(reinterpret_cast<const char *>(b), sizeof(T));
}

template <typename T>
T get_le(const std::string &in, std::size_t &pos)
{
    if (in.size() - pos < sizeof(T))
        throw Error("format", "weight file truncated");
    unsigned char b[sizeof(T)];
    std::memcpy(b, in.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(b, b + sizeof(T));
    pos += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

} // namespace detail

inline nlohmann::json config_json(const UNetConfig &c)
{
    return {{"in_channels", c.in_channels}, {"depth", c.depth}, {"base_channels", c.base_channels},
            {"kernel", c.kernel}};
}

inline UNetConfig config_from_json(const nlohmann::json &j)
{
    UNetConfig c;
    c.in_channels = j.at("in_channels").get<std::size_t>();
    c.depth = j.at("depth").get<std::size_t>();
    c.base_channels = j.at("base_channels").get<std::size_t>();
    c.kernel = j.value("kernel", std::size_t{3});
    c.validate();
    return c;
}

// Serializes one or more parameter sets (e.g. a density-routed pair) with a free-form
// JSON `extra` block describing how they are used.
inline std::string encode_params(const std::vector<const UNetParams *> &sets, const nlohmann::json &extra = {})
{
    nlohmann::json header;
    header["extra"] = extra.is_null() ? nlohmann::json::object() : extra;
    header["models"] = nlohmann::json::array();
    for (const UNetParams *p : sets) {
        nlohmann::json m{{"config", config_json(p->config)}, {"seed", p->seed}, {"tensors", nlohmann::json::array()}};
        for (std::size_t i = 0; i < p->tensors.size(); ++i)
            m["tensors"].push_back({{"name", p->names[i]}, {"shape", p->tensors[i].shape()}});
        header["models"].push_back(m);
    }
    const std::string hs = header.dump();
    std::string out = "REMU";
    detail::put_le<std::uint32_t>(out, weight_file_version);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(hs.size()));
    out += hs;
    for (const UNetParams *p : sets)
        for (const auto &t : p->tensors)
            for (double v : t.values())
                detail::put_le<double>(out, v);
    return out;
}

struct DecodedParams
{
    std::vector<UNetParams> sets;
    nlohmann::json extra;
};

inline DecodedParams decode_params(const std::string &buf)
{
    if (buf.size() < 12 || buf.compare(0, 4, "REMU") != 0)
        throw Error("format", "not a weight file (missing REMU magic)");
    std::size_t pos = 4;
    const auto version = detail::get_le<std::uint32_t>(buf, pos);
    if (version != weight_file_version)
        throw Error("format", "unsupported weight file version " + std::to_string(version));
    const auto hlen = detail::get_le<std::uint32_t>(buf, pos);
    if (buf.size() - pos < hlen)
        throw Error("format", "weight file header truncated");
    DecodedParams out;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(buf.substr(pos, hlen));
        pos += hlen;
        out.extra = header.value("extra", nlohmann::json::object());
        for (const auto &m : header.at("models")) {
            UNetParams p;
            p.config = config_from_json(m.at("config"));
            p.seed = m.at("seed").get<std::uint64_t>();
            const auto layout = unet_layout(p.config);
            const auto &tensors = m.at("tensors");
            require(tensors.size() == layout.size(), "weight file tensor count does not match its config", "format");
            for (std::size_t i = 0; i < layout.size(); ++i) {
                const auto name = tensors[i].at("name").get<std::string>();
                const auto shape = tensors[i].at("shape").get<Shape>();
                require(name == layout[i].first && shape == layout[i].second,
                        "weight file tensor " + name + " does not match the u-net layout", "format");
                p.names.push_back(name);
                p.tensors.emplace_back(shape);
            }
            out.sets.push_back(std::move(p));
        }
    } catch (const nlohmann::json::exception &e) {
        throw Error("format", std::string("weight file header: ") + e.what());
    }
    for (auto &p : out.sets)
        for (auto &t : p.tensors)
            for (double &v : t.values())
                v = detail::get_le<double>(buf, pos);
    if (pos != buf.size())
        throw Error("format", "trailing bytes after weight data");
    return out;
}

inline void save_params(const std::filesystem::path &path, const std::vector<const UNetParams *> &sets,
                        const nlohmann::json &extra = {})
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("io", "cannot write " + path.string());
    const std::string bytes = encode_params(sets, extra);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline void save_params(const std::filesystem::path &path, const UNetParams &p) { save_params(path, {&p}); }

inline DecodedParams load_params_file(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("io", "cannot open " + path.string());
    return decode_params({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});
}

inline UNetParams load_params(const std::filesystem::path &path)
{
    auto d = load_params_file(path);
    require(d.sets.size() == 1, "weight file holds " + std::to_string(d.sets.size()) + " models, expected 1",
            "format");
    return std::move(d.sets.front());
}

} // namespace remforge::nn

#endif
