#pragma once

#include <map>
#include <optional>
#include <vector>

#include "tsn/instance_stream.hpp"
#include "tsn/pixel_stream.hpp"

namespace tsn {

// Both memories for one object across a video, with the frame ledger used by
// capacity eviction.
template <typename T>
struct ObjectMemory {
  PixelMemory<T> pix;
  std::vector<int> pix_frames;  // source frame index per stored memory frame
  InstanceMemory<T> inst;

  int head_count() const { return static_cast<int>(inst.heads.size()); }
};

template <typename T>
struct VideoState {
  int hw = 0;           // stride-s rows per frame
  int first_frame = -1; // annotated frame; never evicted
  std::map<int, ObjectMemory<T>> objects;

  bool initialized() const { return first_frame >= 0; }
};

// Append one reference frame's rows (and optionally its head) to an object's
// memories. Heads are only passed for frames where the object is present.
template <typename T>
void append_reference(ObjectMemory<T>& mem, int frame_index, const TensorT<T>& keys,
                      const TensorT<T>& values, std::optional<SegHead<T>> head) {
  mem.pix.append(keys, values);
  mem.pix_frames.push_back(frame_index);
  if (head) {
    head->source_frame = frame_index;
    mem.inst.heads.push_back(std::move(*head));
  }
}

// Evict oldest non-first memory frames until at most n_max remain. The first
// annotated frame is pinned.
template <typename T>
void evict_to_capacity(ObjectMemory<T>& mem, int n_max, int first_frame, int hw) {
  while (mem.pix.frames > n_max) {
    int slot = -1;
    for (size_t i = 0; i < mem.pix_frames.size(); ++i) {
      if (mem.pix_frames[i] != first_frame) {
        slot = static_cast<int>(i);
        break;
      }
    }
    if (slot < 0) return;  // everything pinned
    const int frame = mem.pix_frames[static_cast<size_t>(slot)];
    mem.pix.erase_slot(slot, hw);
    mem.pix_frames.erase(mem.pix_frames.begin() + slot);
    for (size_t i = 0; i < mem.inst.heads.size(); ++i) {
      if (mem.inst.heads[i].source_frame == frame) {
        mem.inst.heads.erase(mem.inst.heads.begin() + static_cast<long>(i));
        break;
      }
    }
  }
}

}  // namespace tsn
