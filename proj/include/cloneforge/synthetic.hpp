#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace cloneforge {

/// Procedural stand-in for CIFAR-10 used when the real batches are not on
/// disk: ten scene families (gradients, blobs, stripes, checkers, ...) with
/// random colours and layout, emitted in the CIFAR-10 binary record layout.
std::vector<std::uint8_t> synthetic_cifar_records(std::size_t count, std::uint64_t seed);
void write_synthetic_cifar(const std::filesystem::path& path, std::size_t count, std::uint64_t seed);

/// The CIFAR-10 batch files under `dir` (data_batch_*.bin, test_batch.bin), sorted.
std::vector<std::filesystem::path> find_cifar_batches(const std::filesystem::path& dir);

}  // namespace cloneforge
