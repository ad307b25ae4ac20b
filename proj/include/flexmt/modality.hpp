// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

namespace flexmt {

enum class Modality { Image, Text };

// Per-token tag in the composite sequence.
enum class TokenTag { ImageCls, Image, TextCls, Text };

// Encoder pass kinds: one cross-modal pass plus two intra-modal refinement
// passes over shared weights.
enum class Task { Joint, ImageOnly, TextOnly };

inline bool is_image_tag(TokenTag t) {
  return t == TokenTag::ImageCls || t == TokenTag::Image;
}
inline bool is_text_tag(TokenTag t) {
  return t == TokenTag::TextCls || t == TokenTag::Text;
}
inline Modality tag_modality(TokenTag t) {
  return is_image_tag(t) ? Modality::Image : Modality::Text;
}

inline std::string task_name(Task t) {
  switch (t) {
    case Task::Joint: return "joint";
    case Task::ImageOnly: return "image-only";
    default: return "text-only";
  }
}

inline std::string modality_name(Modality m) {
  return m == Modality::Image ? "image" : "text";
}

}  // namespace flexmt
