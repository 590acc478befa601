#ifndef BLIPTEST_DETAIL_ENCODED_HPP
#define BLIPTEST_DETAIL_ENCODED_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "bliptest/seqdata.hpp"

namespace bliptest::detail {

// Level-indexed view of a dataset.  Bootstrap replicates gather these
// index arrays instead of re-deriving level sets, so every replicate
// shares the base dataset's cell layout.
struct EncodedTime {
  std::vector<double> x_levels;
  std::vector<double> z_levels;
  int control = -1; // index of z == 0 in z_levels
  std::vector<uint8_t> xi;
  std::vector<uint8_t> zi;
  int n_cells() const { return static_cast<int>(x_levels.size() * z_levels.size()); }
  int cell(int x_index, int z_index) const {
    return x_index * static_cast<int>(z_levels.size()) + z_index;
  }
};

struct Encoded {
  int T = 0;
  int n = 0;
  OutcomeFamily family = OutcomeFamily::normal;
  std::vector<EncodedTime> times;
  std::vector<double> y;
};

Encoded encode(const SequentialDataset& ds);
Encoded gather(const Encoded& base, std::span<const uint32_t> indices);

// Per-cell count / mean / sample variance at one time.
struct CellStatsArrays {
  std::vector<int> count;
  std::vector<double> mean;
  std::vector<double> svar; // denominator count-1; 0 for singleton cells
};

CellStatsArrays cell_stats(const Encoded& e, int t); // t is 1-based

} // namespace bliptest::detail

#endif
