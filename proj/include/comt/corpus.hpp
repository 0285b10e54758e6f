#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "comt/jsonl.hpp"

namespace comt {

enum class Split { Train, Val, Test };

std::string_view to_string(Split s) noexcept;
std::optional<Split> parse_split(std::string_view s) noexcept;

/// One source report: free text plus the images it describes.
struct RawReport {
  std::string report_id;
  Split split = Split::Train;
  std::vector<std::string> image_refs;
  std::string report_text;
  std::string source;

  friend bool operator==(const RawReport&, const RawReport&) = default;
};

Json to_json(const RawReport& r);

/// Strict conversion; throws ValidationError naming the offending field.
RawReport raw_report_from_json(const Json& j);

/// Character offsets [start, end) into the parent text.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const noexcept { return end - start; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct Sentence {
  std::size_t index = 0;
  std::string text;
  Span span;

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

/// Rule-based segmentation. A sentence ends at '.', '!' or '?' followed by
/// whitespace and an uppercase letter (or a digit-free clause start), or at
/// end of text. Abbreviations ("Dr.", "a.m.", "e.g."), decimals ("1.5 cm")
/// and clause-initial enumerators ("1.", "2.") never end a sentence. A
/// "Header:" prefix before an enumerated list is kept with the first item.
///
/// Spans cover the sentence text exactly, with surrounding whitespace
/// excluded; empty or all-whitespace input yields no sentences.
std::vector<Sentence> split_sentences(std::string_view text);

struct RejectedLine {
  std::size_t line_number = 0;  // 1-based
  std::string reason;
};

struct LoadResult {
  std::vector<RawReport> reports;
  std::vector<RejectedLine> rejects;
};

/// Load a line-delimited raw corpus. `source_tag`, when non-empty, overrides
/// the per-line `source` field (and fills it when absent).
///
/// Malformed lines and empty report texts are rejected per line. Duplicate
/// report ids abort with DuplicateIdError listing every duplicated id; an
/// unreadable file throws IoError.
LoadResult load_raw_corpus(const std::filesystem::path& path, std::string_view source_tag = {});

std::string trim(std::string_view s);

}  // namespace comt
