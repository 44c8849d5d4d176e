#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace incgeo {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    double seconds = 0.0;
    std::string detail;
};

struct SuiteOptions {
    std::string out_dir;        // empty: no CSV artifacts
    int incidence_seeds = 20;   // seeds per (s, t, scale) cell
    int refine_seeds = 10;      // seeds per (s, t) pair for the refinement battery
    int decompose_seeds = 2;    // seeds per dimension for the multiscale battery
    bool heavy = true;          // include the large multiscale inputs
};

// Runs acceptance checks 1..12, printing one pass/fail line per criterion to
// `log` and writing the battery CSV artifacts when out_dir is set.
std::vector<CriterionResult> run_acceptance(const SuiteOptions& options, std::ostream& log);

// CSV body comparison helper for the determinism check: comment lines
// (leading '#') are ignored.
bool csv_bodies_identical(const std::string& path_a, const std::string& path_b);

}  // namespace incgeo
