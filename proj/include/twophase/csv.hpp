#pragma once
#include <iosfwd>
#include <string>
#include <vector>

#include "twophase/asymptotics.hpp"
#include "twophase/data.hpp"
#include "twophase/weights.hpp"

namespace twophase {

// Two-phase data schema: id, y, delta, u_1..u_m, stratum (optional on read;
// recomputed only if a rule is supplied elsewhere), xi, x_1..x_p. x fields
// are empty exactly when xi = 0; violations error with the 1-based data row.
std::string sample_to_csv(const TwoPhaseSample& sample);
TwoPhaseSample sample_from_csv(std::istream& in, Design design,
                               const std::vector<double>* p_bernoulli = nullptr);

// id, method, w for every phase-I record (w = 0 where xi = 0).
std::string weights_to_csv(const TwoPhaseSample& sample, const WeightSet& ws);

// Draw-set schema: ltilde_1..p, Z_1..k, stratum, pi0. Unit masses; stratum
// sampling probabilities are read off pi0 (constant within stratum).
DrawSet draws_from_csv(std::istream& in);
std::string draws_to_csv(const DrawSet& draws);

std::string read_file(const std::string& path);
// Write via temp file + rename so readers never observe partial output.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace twophase
