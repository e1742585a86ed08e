#pragma once

#include "gevd/features/extract.hpp"
#include "gevd/padopt/padopt.hpp"
#include "gevd/petk/edit.hpp"

namespace gevd {

/// Request that pads `pe` toward the byte distribution `target`.
inline PaddingRequest byte_request(const pe::PeImage& image, const std::vector<double>& target, double gap,
                                   PadMode mode = PadMode::relaxed) {
    auto h = byte_histogram(image.bytes());
    PaddingRequest req;
    req.b.assign(h.counts.begin(), h.counts.end());
    req.r = target;
    req.gap = gap;
    req.mode = mode;
    return req;
}

/// Appends a certified plan to the overlay.
inline pe::PeImage append_overlay(const pe::PeImage& image, const PaddingPlan& plan) {
    if (!plan.certificate.certified) throw ContractError("append_overlay: plan is not certified");
    return pe::append_overlay(image, as_byte_counts(plan));
}

} // namespace gevd
