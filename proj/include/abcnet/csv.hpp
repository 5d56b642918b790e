// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace abcnet::csv {

/// RFC 4180 field: quoted when it holds a comma, quote, CR or LF.
std::string escape(std::string_view field);
/// Fields joined with commas and terminated by CRLF.
std::string row(const std::vector<std::string>& fields);
/// Shortest representation that round-trips; empty for NaN.
std::string number(double v);
std::string number(std::int64_t v);

/// Splits one record; handles quoted fields with embedded commas and quotes.
std::vector<std::string> parse_row(std::string_view line);

}  // namespace abcnet::csv
