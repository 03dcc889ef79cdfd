#pragma once

#include <string>

#include "atmle/cohort.hpp"

namespace atmle {

// Cohort CSV schema (bit-exact): header `S,A,Y,W1,...,Wd[,source]`,
// S and A in {0,1}, decimal-point reals, UTF-8, LF line endings, no index
// column. Reals are written with enough digits to round-trip exactly.
Cohort cohort_from_csv(const std::string& text, double randomization_prob);
std::string cohort_to_csv(const Cohort& cohort);

Cohort read_cohort_csv(const std::string& path, double randomization_prob);
void write_cohort_csv(const Cohort& cohort, const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace atmle
