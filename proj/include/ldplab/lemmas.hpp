#pragma once

// Numerical checks of the distortion, expansion, binding and grid estimates. Every
// check is an inequality between computed double quantities on sampled (or
// exhaustively enumerated) instances that satisfy the hypothesis.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ldplab/map_core.hpp"

namespace ldplab {

enum class LemmaId { dist, exp, exp2, reclem1, reclem2, holder_a, holder_b, holder_c, bdd, subl };

std::string_view to_string(LemmaId id);
/// Throws Error(validation) on an unknown name.
LemmaId lemma_from_string(std::string_view name);
std::vector<LemmaId> all_lemmas();

struct LemmaOptions {
  int n = -1;                ///< time n (dist, exp, exp2, reclem2); negative picks the lemma default
  int p = 0;                 ///< single p for reclem1 and holder_*; 0 sweeps every admissible p
  std::size_t samples = 1000;
  std::uint64_t seed = 1;
  int partition_depth = 0;   ///< bdd and subl: partition depth; 0 uses params.depth
};

struct LemmaReport {
  std::string lemma;
  bool pass = true;
  bool vacuous = false;
  double worst = 0.0;   ///< worst observed value of the checked quantity
  double bound = 0.0;   ///< the bound it is compared against
  bool upper = true;    ///< true: worst <= bound is required; false: worst >= bound
  std::size_t checked = 0;
  std::string detail;
};

/// Throws Error(insufficient_samples) when fewer than 10 instances satisfy the hypothesis.
LemmaReport verify_core_lemma(LemmaId id, const MapParams& params, const LemmaOptions& opts = {});

/// Every lemma with its default time; bdd and subl share one partition run.
std::vector<LemmaReport> verify_all_lemmas(const MapParams& params, const LemmaOptions& opts = {});

}  // namespace ldplab
