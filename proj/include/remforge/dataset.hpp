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

// On-disk dataset layout:
//
//   <root>/<map_id>/heights.pgm   16-bit PGM of building heights in decimeters
//   <root>/<map_id>/meta.json     {map_id, size, density, transmitters: [{x, y, z_m}]}
//   <root>/<map_id>/rem_<i>.pgm   8-bit gray-level REM of transmitter i (optional)

#ifndef REMFORGE_DATASET_HPP
#define REMFORGE_DATASET_HPP

#include "core.hpp"
#include "geo.hpp"
#include "pnm.hpp"
#include "propagation.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace remforge::dataset {

namespace fs = std::filesystem;
using nlohmann::json;

inline Grid<std::uint16_t> heights_to_decimeters(const geo::CityMap &map)
{
    Grid<std::uint16_t> out(map.width(), map.height(), 0);
    std::transform(map.heights().begin(), map.heights().end(), out.begin(),
                   [](double h) { return static_cast<std::uint16_t>(round_half_away(h * 10.0)); });
    return out;
}

inline geo::CityMap decimeters_to_heights(const Grid<std::uint16_t> &dm)
{
    Grid<double> h(dm.width(), dm.height(), 0.0);
    for (std::size_t i = 0; i < dm.size(); ++i) {
        const std::uint16_t v = dm.data()[i];
        require(v == 0 || (v % 33 == 0 && v / 33 >= geo::min_stories && v / 33 <= geo::max_stories),
                "building height " + std::to_string(v) + " dm is out of range", "out_of_range");
        h.data()[i] = v == 0 ? 0.0 : geo::height_for_stories(v / 33);
    }
    return geo::CityMap(std::move(h));
}

inline json meta_json(const geo::MapBundle &b)
{
    json tx = json::array();
    for (const auto &t : b.transmitters)
        tx.push_back({{"x", t.x}, {"y", t.y}, {"z_m", t.z}});
    return {{"map_id", b.map_id},
            {"size", b.map.width()},
            {"density", geo::building_density(b.map)},
            {"transmitters", tx}};
}

inline std::string read_text(const fs::path &p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw Error("io", "cannot open " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const fs::path &p, const std::string &s)
{
    if (p.has_parent_path())
        fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("io", "cannot write " + p.string());
    out << s;
}

inline fs::path bundle_dir(const fs::path &root, const std::string &map_id) { return root / map_id; }

inline void save_bundle(const fs::path &root, const geo::MapBundle &b)
{
    require(!b.map_id.empty() && b.map_id.find('/') == std::string::npos, "map_id must be a plain name");
    const fs::path dir = bundle_dir(root, b.map_id);
    fs::create_directories(dir);
    pnm::write_pgm16(dir / "heights.pgm", heights_to_decimeters(b.map));
    write_text(dir / "meta.json", meta_json(b).dump(2) + "\n");
}

inline geo::MapBundle load_bundle(const fs::path &dir)
{
    json meta;
    try {
        meta = json::parse(read_text(dir / "meta.json"));
    } catch (const json::exception &e) {
        throw Error("format", (dir / "meta.json").string() + ": " + e.what());
    }
    geo::MapBundle b;
    try {
        b.map_id = meta.at("map_id").get<std::string>();
        const auto size = meta.at("size").get<std::size_t>();
        b.map = decimeters_to_heights(pnm::read_pgm16(dir / "heights.pgm"));
        require(b.map.width() == size && b.map.height() == size,
                "heights.pgm is " + std::to_string(b.map.width()) + "x" + std::to_string(b.map.height()) +
                    " but meta.json declares size " + std::to_string(size),
                "dimension_mismatch");
        for (const auto &t : meta.at("transmitters")) {
            geo::TxSite s{t.at("x").get<long>(), t.at("y").get<long>(), t.at("z_m").get<double>()};
            require(geo::is_valid_site(b.map, s), "transmitter outside a building or below its roof", "out_of_range");
            b.transmitters.push_back(s);
        }
    } catch (const json::exception &e) {
        throw Error("format", (dir / "meta.json").string() + ": " + e.what());
    }
    return b;
}

inline fs::path rem_path(const fs::path &root, const std::string &map_id, std::size_t tx_index)
{
    return bundle_dir(root, map_id) / ("rem_" + std::to_string(tx_index) + ".pgm");
}

inline void save_rem(const fs::path &path, const propagation::RadioMap &rem)
{
    pnm::write_pgm8(path, propagation::to_gray(rem));
}

inline propagation::RadioMap load_rem(const fs::path &path)
{
    return propagation::from_gray(pnm::read_pgm8(path));
}

// Map ids of every bundle directory under root, sorted.
inline std::vector<std::string> list_bundles(const fs::path &root)
{
    std::vector<std::string> ids;
    if (!fs::exists(root))
        throw Error("io", "dataset root " + root.string() + " does not exist");
    for (const auto &e : fs::directory_iterator(root))
        if (e.is_directory() && fs::exists(e.path() / "meta.json"))
            ids.push_back(e.path().filename().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

} // namespace remforge::dataset

#endif
