#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace d3m {

// Base class for all pipeline errors. Specific conditions get their own
// type so callers and tests can match on them.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptyDataset : Error {
    EmptyDataset() : Error("dataset is empty") {}
};
struct LabelOutOfRange : Error {
    std::size_t index;
    LabelOutOfRange(std::size_t i, int label, int k)
        : Error("image " + std::to_string(i) + ": label " + std::to_string(label) +
                " out of range for K=" + std::to_string(k)),
          index(i) {}
};
struct NonFinitePixel : Error {
    std::size_t index;
    explicit NonFinitePixel(std::size_t i)
        : Error("image " + std::to_string(i) + ": non-finite or out-of-range pixel"), index(i) {}
};
struct PatchLargerThanImage : Error {
    PatchLargerThanImage() : Error("patch dimensions exceed image dimensions") {}
};
struct TeacherInputMismatch : Error {
    TeacherInputMismatch() : Error("teacher input resolution undefined") {}
};
struct IndivisibleGrid : Error {
    IndivisibleGrid() : Error("output dimensions not divisible by grid") {}
};
struct TimestepOutOfRange : Error {
    TimestepOutOfRange(int t, int T)
        : Error("timestep " + std::to_string(t) + " outside [0, " + std::to_string(T) + ")") {}
};
struct BackendUnavailable : Error {
    explicit BackendUnavailable(const std::string& why) : Error("backend unavailable: " + why) {}
};
struct NonFiniteActivation : Error {
    NonFiniteActivation() : Error("non-finite activation in denoiser") {}
};
struct NonFiniteLoss : Error {
    NonFiniteLoss() : Error("loss became non-finite") {}
};
struct NonFiniteLogits : Error {
    NonFiniteLogits() : Error("teacher produced non-finite logits") {}
};
struct EmptyCollageSet : Error {
    EmptyCollageSet() : Error("collage set for class is empty") {}
};
struct DivergedTraining : Error {
    DivergedTraining() : Error("training loss non-finite") {}
};
struct UnknownToken : Error {
    explicit UnknownToken(const std::string& tok) : Error("unknown token: " + tok) {}
};
struct NonDeterministicBackend : Error {
    NonDeterministicBackend() : Error("replay hash mismatch: backend not deterministic") {}
};
struct ChecksumMismatch : Error {
    ChecksumMismatch() : Error("artifact checksum mismatch") {}
};
struct VersionUnsupported : Error {
    explicit VersionUnsupported(uint32_t v)
        : Error("unsupported artifact format version " + std::to_string(v)) {}
};
struct ConfigInvalid : Error {
    explicit ConfigInvalid(const std::string& why) : Error("invalid config: " + why) {}
};
struct StageFailed : Error {
    std::string stage;
    StageFailed(const std::string& s, const std::string& cause)
        : Error("stage '" + s + "' failed: " + cause), stage(s) {}
};

}  // namespace d3m
