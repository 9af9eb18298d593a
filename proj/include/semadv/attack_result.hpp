#pragma once

#include <string>
#include <vector>

#include "semadv/imaging/image.hpp"

namespace semadv {

struct IterationRecord {
  int iteration = 0;
  double loss = 0.0;
  double target_confidence = 0.0;
  std::size_t predicted = 0;
};

/// Outcome of one targeted attack on one image.
struct AttackResult {
  RgbImage original;
  RgbImage adversarial;
  std::size_t label = 0;    // ground truth of the original image
  std::size_t target = 0;
  std::size_t predicted = 0;
  bool success = false;
  double confidence = 0.0;  // softmax probability of the target class
  NormReport norms;
  std::vector<IterationRecord> trace;
  int iterations = 0;       // optimiser updates applied
  int rounds = 0;           // L-BFGS rounds (texture attack)
  int lbfgs_steps = 0;      // L-BFGS steps over all rounds (texture attack)
  std::string stop_reason;  // "target_reached", "max_iters", "confidence", ...
  std::vector<std::string> round_stops;  // L-BFGS stop reason of each round
  double seconds = 0.0;     // wall-clock time of the attack
};

}  // namespace semadv
