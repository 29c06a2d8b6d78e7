#pragma once

namespace loralife {

inline constexpr const char* version_string = "1.0.0";

// Major version of the scenario/report file schema. Scenario files declare
// the schema they were written for and are rejected on mismatch.
inline constexpr int schema_version = 1;

}  // namespace loralife
