#pragma once

namespace seqx {

/// Keeps large activation buffers on the heap between training steps
/// instead of mapping and unmapping them on every allocation. Call once
/// from main; a no-op where the allocator has no such knobs.
void tune_allocator();

}  // namespace seqx
