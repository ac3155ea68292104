#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cnet {

// BIOES tags for a single entity type. The numeric order is the tie-break
// order used by decoding.
enum class Tag : std::uint8_t { B = 0, I = 1, O = 2, E = 3, S = 4 };

inline constexpr std::size_t kNumTags = 5;
// Extra rows/columns of the transition matrix.
inline constexpr std::size_t kStartState = 5;
inline constexpr std::size_t kStopState = 6;
inline constexpr std::size_t kNumStates = 7;

using TagSequence = std::vector<Tag>;

inline std::size_t index_of(Tag t) { return static_cast<std::size_t>(t); }
Tag tag_from_index(std::size_t i);
char tag_letter(Tag t);
// Accepts one of "BIOES" (case-sensitive); throws otherwise.
Tag tag_from_letter(char c);
std::string tags_to_string(std::span<const Tag> tags);
TagSequence tags_from_string(std::string_view letters);

// Inclusive token span [start, end].
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  auto operator<=>(const Span&) const = default;
  bool overlaps(const Span& other) const {
    return start <= other.end && other.start <= end;
  }
};

// Whether a BIOES transition is structurally possible. Indices follow Tag,
// with kStartState / kStopState for the sentence boundaries.
bool transition_allowed(std::size_t from, std::size_t to);

bool is_valid_bio(std::span<const Tag> tags);
bool is_valid_bioes(std::span<const Tag> tags);

// BIO -> BIOES. An I that follows O or starts the sentence is an error, or is
// treated as B when lenient.
TagSequence bio_to_bioes(std::span<const Tag> bio, bool lenient = false);
TagSequence bioes_to_bio(std::span<const Tag> bioes);

// Entity spans of a valid BIOES sequence; throws on invalid input (repair
// first).
std::vector<Span> bioes_to_spans(std::span<const Tag> tags);

}  // namespace cnet
