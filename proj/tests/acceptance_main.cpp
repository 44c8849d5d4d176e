// Acceptance battery: runs every criterion, prints one pass/fail line per
// criterion, exits nonzero if any fails. Criterion 13 invokes the CLI binary
// (path in the INCGEO_CLI environment variable) twice and compares CSV bodies.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "incgeo/accept.hpp"

namespace {

bool run_cli_suite(const std::string& cli, const std::string& out_dir) {
    std::string cmd = cli + " suite --out " + out_dir +
                      " --incidence-seeds 3 --refine-seeds 2 --decompose-seeds 1 --quick" +
                      " > " + out_dir + ".log 2>&1";
    return std::system(cmd.c_str()) == 0;
}

bool criterion_determinism(std::ostream& log) {
    const char* cli = std::getenv("INCGEO_CLI");
    if (cli == nullptr) {
        log << "[FAIL] criterion 13: INCGEO_CLI not set\n";
        return false;
    }
    std::filesystem::path base = std::filesystem::temp_directory_path() / "incgeo_det";
    std::filesystem::remove_all(base);
    std::string a = (base / "run_a").string();
    std::string b = (base / "run_b").string();
    std::filesystem::create_directories(a);
    std::filesystem::create_directories(b);
    if (!run_cli_suite(cli, a) || !run_cli_suite(cli, b)) {
        log << "[FAIL] criterion 13: suite invocation failed\n";
        return false;
    }
    bool ok = true;
    for (const char* name : {"incidence.csv", "lower_bound.csv", "energies.csv", "criteria.csv"}) {
        std::string pa = a + "/" + name;
        std::string pb = b + "/" + name;
        if (!std::filesystem::exists(pa) || !std::filesystem::exists(pb) ||
            !incgeo::csv_bodies_identical(pa, pb)) {
            ok = false;
            log << "  mismatch: " << name << "\n";
        }
    }
    log << (ok ? "[PASS] " : "[FAIL] ") << "criterion 13: suite reruns yield identical CSV bodies\n";
    return ok;
}

}  // namespace

int main() {
    incgeo::SuiteOptions options;
    auto results = incgeo::run_acceptance(options, std::cout);
    bool all = true;
    for (const auto& r : results) all = all && r.pass;
    all = criterion_determinism(std::cout) && all;
    std::cout << (all ? "acceptance: ALL PASS" : "acceptance: FAILURES") << std::endl;
    return all ? 0 : 1;
}
