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

#include "remforge/geo.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace remforge;

TEST(Geo, StoryHeightsAreMultiplesOf3p3)
{
    EXPECT_DOUBLE_EQ(geo::height_for_stories(2), 6.6);
    EXPECT_DOUBLE_EQ(geo::height_for_stories(6), 19.8);
    for (int s = geo::min_stories; s <= geo::max_stories; ++s)
        EXPECT_EQ(geo::stories_for_height(geo::height_for_stories(s)), s);
    EXPECT_EQ(geo::stories_for_height(0.0), 0);
    EXPECT_EQ(geo::stories_for_height(3.3), -1);
    EXPECT_EQ(geo::stories_for_height(23.1), -1);
    EXPECT_EQ(geo::stories_for_height(7.0), -1);
}

TEST(Geo, CityMapRejectsOffGridHeights)
{
    Grid<double> g(4, 4, 0.0);
    g(1, 1) = 7.0;
    try {
        geo::CityMap m(g);
        FAIL() << "accepted a 7 m building";
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), "out_of_range");
    }
    EXPECT_THROW(geo::CityMap(Grid<double>(0, 0)), Error);
}

TEST(Geo, HeightGrayQuantization)
{
    EXPECT_EQ(geo::height_gray(0.0), 0);
    EXPECT_EQ(geo::height_gray(19.8), 255);
    EXPECT_EQ(geo::height_gray(6.6), 85); // 255 / 3
    EXPECT_EQ(geo::height_gray(13.2), 170);
}

TEST(Geo, TransmitterWindowIsCentred)
{
    const auto w = geo::tx_window(256);
    EXPECT_EQ(w.hi - w.lo, 150);
    EXPECT_EQ(w.lo, 53);
    const auto s = geo::tx_window(64);
    EXPECT_EQ(s.hi - s.lo, 38); // round(150 * 64 / 256) = 37.5 -> 38
    EXPECT_EQ(s.lo, 13);
}

TEST(Geo, EdgePixels)
{
    Grid<double> g(5, 5, 0.0);
    for (std::size_t y = 1; y < 4; ++y)
        for (std::size_t x = 1; x < 4; ++x)
            g(x, y) = 19.8;
    const geo::CityMap m(g);
    EXPECT_TRUE(geo::is_edge_pixel(m, 1, 1));
    EXPECT_TRUE(geo::is_edge_pixel(m, 3, 2));
    EXPECT_FALSE(geo::is_edge_pixel(m, 2, 2));
    EXPECT_FALSE(geo::is_edge_pixel(m, 0, 0));
    EXPECT_FALSE(geo::is_edge_pixel(m, -1, 2));
}

TEST(Geo, GeneratedCitiesHitDensityAndAreDeterministic)
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dens(0.1, 0.45);
    for (int i = 0; i < 30; ++i) {
        const double d = dens(rng);
        const auto a = geo::generate_city(static_cast<std::uint64_t>(i), 64, d);
        EXPECT_NEAR(geo::building_density(a), d, 0.05);
        EXPECT_EQ(a, geo::generate_city(static_cast<std::uint64_t>(i), 64, d));
        for (std::size_t k = 0; k < 64; ++k) {
            EXPECT_FALSE(a.is_building(k, 0));
            EXPECT_FALSE(a.is_building(0, k));
            EXPECT_FALSE(a.is_building(k, 63));
            EXPECT_FALSE(a.is_building(63, k));
        }
        for (double h : a.heights())
            EXPECT_GE(geo::stories_for_height(h), 0);
    }
    EXPECT_THROW(geo::generate_city(1, 64, 0.7), Error);
    EXPECT_THROW(geo::generate_city(1, 4, 0.3), Error);
}

TEST(Geo, PlacedTransmittersAreEligible)
{
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto b = geo::generate_bundle(seed, 64, 0.3, 4, "m");
        ASSERT_EQ(b.transmitters.size(), 4u);
        for (const auto &tx : b.transmitters) {
            EXPECT_TRUE(geo::is_eligible_site(b.map, tx));
            EXPECT_TRUE(geo::is_valid_site(b.map, tx));
            EXPECT_GE(b.map(tx.x, tx.y), 16.5);
            EXPECT_DOUBLE_EQ(tx.z, b.map(tx.x, tx.y) + 3.0);
        }
        EXPECT_EQ(b, geo::generate_bundle(seed, 64, 0.3, 4, "m"));
    }
}

TEST(Geo, TooManyTransmittersIsAnError)
{
    const auto m = geo::generate_city(3, 32, 0.3);
    const auto n = geo::eligible_sites(m).size();
    try {
        geo::place_transmitters(m, n + 1, 1);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), "no_eligible_building");
    }
    EXPECT_THROW(geo::place_transmitters(geo::CityMap::empty(32), 1, 1), Error);
}
