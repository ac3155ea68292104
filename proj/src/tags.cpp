#include "cnet/tags.hpp"

#include <stdexcept>

namespace cnet {

Tag tag_from_index(std::size_t i) {
  if (i >= kNumTags) throw std::out_of_range("tag index " + std::to_string(i));
  return static_cast<Tag>(i);
}

char tag_letter(Tag t) { return "BIOES"[index_of(t)]; }

Tag tag_from_letter(char c) {
  switch (c) {
    case 'B': return Tag::B;
    case 'I': return Tag::I;
    case 'O': return Tag::O;
    case 'E': return Tag::E;
    case 'S': return Tag::S;
    default: throw std::invalid_argument(std::string("unknown tag letter '") + c + "'");
  }
}

std::string tags_to_string(std::span<const Tag> tags) {
  std::string out;
  out.reserve(tags.size());
  for (Tag t : tags) out.push_back(tag_letter(t));
  return out;
}

TagSequence tags_from_string(std::string_view letters) {
  TagSequence out;
  out.reserve(letters.size());
  for (char c : letters) out.push_back(tag_from_letter(c));
  return out;
}

bool transition_allowed(std::size_t from, std::size_t to) {
  if (from == kStopState || to == kStartState) return false;
  const bool to_stop = to == kStopState;
  // Tags that may open a new position after a closed entity or O.
  auto opens = [&] {
    return to_stop || to == index_of(Tag::B) || to == index_of(Tag::O) ||
           to == index_of(Tag::S);
  };
  if (from == kStartState) return !to_stop && opens();
  switch (static_cast<Tag>(from)) {
    case Tag::B:
    case Tag::I:
      return to == index_of(Tag::I) || to == index_of(Tag::E);
    case Tag::O:
    case Tag::E:
    case Tag::S:
      return opens();
  }
  return false;
}

bool is_valid_bioes(std::span<const Tag> tags) {
  std::size_t prev = kStartState;
  for (Tag t : tags) {
    if (!transition_allowed(prev, index_of(t))) return false;
    prev = index_of(t);
  }
  return transition_allowed(prev, kStopState);
}

bool is_valid_bio(std::span<const Tag> tags) {
  Tag prev = Tag::O;
  for (Tag t : tags) {
    if (t == Tag::E || t == Tag::S) return false;
    if (t == Tag::I && prev == Tag::O) return false;
    prev = t;
  }
  return true;
}

TagSequence bio_to_bioes(std::span<const Tag> bio, bool lenient) {
  TagSequence out(bio.begin(), bio.end());
  for (std::size_t t = 0; t < out.size(); ++t) {
    const Tag tag = out[t];
    if (tag == Tag::E || tag == Tag::S) {
      throw std::invalid_argument("bio_to_bioes: tag '" + std::string(1, tag_letter(tag)) +
                                  "' at position " + std::to_string(t) + " is not BIO");
    }
    if (tag == Tag::I && (t == 0 || out[t - 1] == Tag::O)) {
      if (!lenient) {
        throw std::invalid_argument("bio_to_bioes: I at position " + std::to_string(t) +
                                    " does not continue an entity");
      }
      out[t] = Tag::B;
    }
  }
  // Close every entity: the last token of a run becomes E, or S if alone.
  for (std::size_t t = 0; t < out.size(); ++t) {
    const bool continues = t + 1 < out.size() && out[t + 1] == Tag::I;
    if (out[t] == Tag::B && !continues) out[t] = Tag::S;
    else if (out[t] == Tag::I && !continues) out[t] = Tag::E;
  }
  return out;
}

TagSequence bioes_to_bio(std::span<const Tag> bioes) {
  TagSequence out(bioes.size(), Tag::O);
  for (const Span& s : bioes_to_spans(bioes)) {
    out[s.start] = Tag::B;
    for (std::size_t t = s.start + 1; t <= s.end; ++t) out[t] = Tag::I;
  }
  return out;
}

std::vector<Span> bioes_to_spans(std::span<const Tag> tags) {
  if (!is_valid_bioes(tags)) {
    throw std::invalid_argument("bioes_to_spans: invalid BIOES sequence " +
                                tags_to_string(tags));
  }
  std::vector<Span> spans;
  std::size_t begin = 0;
  for (std::size_t t = 0; t < tags.size(); ++t) {
    switch (tags[t]) {
      case Tag::S: spans.push_back({t, t}); break;
      case Tag::B: begin = t; break;
      case Tag::E: spans.push_back({begin, t}); break;
      default: break;
    }
  }
  return spans;
}

}  // namespace cnet
