#pragma once

// Small text helpers shared by the loaders and writers.

#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lktseq::text {

/// Splits one delimited line; supports double-quoted fields with "" escapes.
std::vector<std::string> SplitRecord(std::string_view line, char delimiter);

/// Tab if the header contains more tabs than commas, else comma.
char DetectDelimiter(std::string_view header);

/// Quotes a field only if it contains the delimiter, a quote, or a newline.
std::string QuoteField(std::string_view field, char delimiter);

std::string_view Trim(std::string_view s);

std::string ToLower(std::string_view s);

/// Shortest representation that parses back to the same double.
std::string FormatDouble(double value);

std::optional<double> ParseDouble(std::string_view s);
std::optional<long long> ParseInt(std::string_view s);

/// Splits on `sep`, trimming each piece and dropping empty ones.
std::vector<std::string> SplitList(std::string_view s, char sep);

}  // namespace lktseq::text
