#pragma once

// Shared test fixtures beyond the library's standard ones.

#include "stlf/scm.hpp"

namespace fixtures {

// Nine series named after the reanalysis covariates, wired so that the two
// selection methods disagree the way the real study does: the MI filter
// keeps {tcw, avg-snlwrf, avg-snswrf, t2m, tp} (radiation and moisture
// correlates pass the threshold, skt and d2m fall to the redundancy screen,
// tcc stays under the MI threshold), while the causal set is exactly load's
// direct parents {skt, t2m, tp}.
inline stlf::ScmSpec era5_shape_spec() {
    return stlf::ScmSpec(
        {"tcc", "tcw", "skt", "avg-snlwrf", "avg-snswrf", "t2m", "d2m", "tp", "load"},
        {
            {"tcc", 1, "tcc", 0.78},
            {"tcw", 1, "tcw", 0.9},
            {"skt", 1, "skt", 0.94},
            {"avg-snlwrf", 1, "avg-snlwrf", 0.45},
            {"tcw", 1, "avg-snlwrf", 0.5},
            {"skt", 1, "avg-snlwrf", 0.3},
            {"avg-snswrf", 1, "avg-snswrf", 0.5},
            {"tcc", 1, "avg-snswrf", -0.65},
            {"t2m", 1, "t2m", 0.15},
            {"skt", 1, "t2m", 0.95},
            {"avg-snswrf", 1, "t2m", 0.55},
            {"d2m", 1, "d2m", 0.3},
            {"skt", 1, "d2m", 0.7},
            {"tp", 1, "tp", 0.45},
            {"tcw", 1, "tp", 0.45},
            {"load", 1, "load", 0.5},
            {"t2m", 1, "load", 0.45},
            {"skt", 1, "load", 0.3},
            {"tp", 1, "load", 0.65},
        },
        {{"tcc", 1.0},
         {"tcw", 1.0},
         {"skt", 1.0},
         {"avg-snlwrf", 0.65},
         {"avg-snswrf", 0.6},
         {"t2m", 0.22},
         {"d2m", 0.55},
         {"tp", 0.8},
         {"load", 0.8}});
}

inline std::vector<std::string> era5_weather_names() {
    return {"tcc", "tcw", "skt", "avg-snlwrf", "avg-snswrf", "t2m", "d2m", "tp"};
}

} // namespace fixtures
