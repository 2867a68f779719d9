// Runs the full validation suite and folds its rows into one verdict per
// acceptance criterion. Exit status is non-zero if any criterion fails.

#include "checks.hpp"

#include <cstdio>
#include <iostream>
#include <map>

namespace {

struct Criterion {
    const char* title;
    double budgetSeconds;  // <= 0: no runtime bound
};

const std::map<int, Criterion> kCriteria = {
    {1, {"LBS identity and rigid root isometry", 1.0}},
    {2, {"analytic gradients vs finite differences", 60.0}},
    {3, {"oracle SDS cancellation", 5.0}},
    {4, {"oracle SDS image convergence", 20.0}},
    {5, {"occlusion-aware skeleton vs ray casting", 0.0}},
    {6, {"retargeting", 0.0}},
    {7, {"masked sequential SDS", 0.0}},
    {8, {"end-to-end desk run", 0.0}},  // desk_run_runtime bounds a single run
    {9, {"serialization round trips", 0.0}},
};

}  // namespace

int main() {
    using forge::validation::CheckResult;
    forge::validation::ValidationOptions options;
    options.onResult = [](const CheckResult& r) {
        if (r.criterion > 0) std::cerr << "  " << forge::validation::format_row(r) << std::endl;
    };
    const std::vector<CheckResult> rows = forge::validation::run_validation(options);

    int failed = 0;
    for (const auto& [id, c] : kCriteria) {
        bool pass = true;
        int count = 0;
        double seconds = 0.0;
        std::string why;
        for (const CheckResult& r : rows) {
            if (r.criterion != id) continue;
            ++count;
            seconds += r.seconds;
            if (!r.passed) {
                pass = false;
                why += (why.empty() ? "" : ", ") + r.name;
            }
        }
        if (count == 0) {
            pass = false;
            why = "no checks ran";
        } else if (c.budgetSeconds > 0 && seconds > c.budgetSeconds) {
            pass = false;
            why += (why.empty() ? "" : ", ") + std::string("over the runtime budget");
        }
        char line[256];
        std::snprintf(line, sizeof line, "%s criterion %d: %s (%d checks, %.2fs)", pass ? "PASS" : "FAIL", id, c.title,
                      count, seconds);
        std::cout << line;
        if (!pass) std::cout << " -- " << why;
        std::cout << std::endl;
        failed += pass ? 0 : 1;
    }
    return failed ? 1 : 0;
}
