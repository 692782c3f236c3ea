// SPDX-License-Identifier: Apache-2.0
//
// Classic marching-cubes lookup tables. Corner i sets bit i of the case index
// when its value is below the iso level. Corners are numbered
//   0 (0,0,0)  1 (1,0,0)  2 (1,1,0)  3 (0,1,0)
//   4 (0,0,1)  5 (1,0,1)  6 (1,1,1)  7 (0,1,1)
// and edges 0..11 join corners 0-1, 1-2, 2-3, 3-0, 4-5, 5-6, 6-7, 7-4, 0-4,
// 1-5, 2-6, 3-7. Triangle lists are terminated by -1.

#pragma once

#include <array>

namespace gsdf::mc {

extern const std::array<int, 256> kEdgeTable;
extern const std::array<std::array<int, 16>, 256> kTriTable;

inline constexpr std::array<std::array<int, 3>, 8> kCornerOffsets = {{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}};

inline constexpr std::array<std::array<int, 2>, 12> kEdgeCorners = {{
    {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6}, {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}}};

}  // namespace gsdf::mc
