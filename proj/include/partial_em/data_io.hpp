#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "partial_em/model.hpp"

namespace partial_em {

/// Parameters of a Gaussian mixture to sample from.
struct MixtureSpec {
    Vector weights;
    Matrix means;                  ///< K x d
    std::vector<Matrix> covariances;

    void validate() const;
};

/// 0.3 N(-2, 1) + 0.7 N(2, 1).
MixtureSpec example1_spec();

/// Draws n points; labels hold the index of the component that produced each point.
Dataset sample_mixture(const MixtureSpec& spec, std::size_t n, std::uint64_t seed);

MixtureSpec mixture_spec_from_json(const std::string& json_text);

/// MNIST-style image set: pixels divided by 255, row-major per image.
struct IdxImages {
    Dataset data;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
};

/// Reads an IDX image file (magic 0x00000803) and label file (magic
/// 0x00000801). Images whose label is not in `keep_digits` are dropped; an
/// unset `keep_digits` keeps everything.
IdxImages load_idx(const std::string& images_path, const std::string& labels_path,
                   const std::optional<std::set<int>>& keep_digits = std::nullopt);

IdxImages parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels,
                    const std::optional<std::set<int>>& keep_digits = std::nullopt);

/// Inverse of parse_idx. Pixels are mapped back with round(255 x).
std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> serialize_idx(const IdxImages& images);

void write_idx(const IdxImages& images, const std::string& images_path, const std::string& labels_path);

/// Reads a numeric CSV. A first row that does not parse as numbers is taken
/// as a header. With has_labels the last column is an integer label.
Dataset load_csv(const std::string& path, bool has_labels);
Dataset parse_csv(const std::string& text, bool has_labels);

/// Writes `x0,...,x{d-1}[,label]` with a header row, 17 significant digits.
std::string dataset_to_csv(const Dataset& data);
void save_csv(const Dataset& data, const std::string& path);

struct PcaTransform {
    Vector mean;               ///< length D
    Matrix basis;              ///< D x d, orthonormal columns
    Vector explained_variance; ///< length d, descending

    /// Projects every point onto the basis. Labels are kept.
    Dataset apply(const Dataset& data) const;
};

/// Top d_out principal directions of the mean-centered data. Each basis
/// vector is signed so that its largest-magnitude entry is positive.
PcaTransform fit_pca(const Dataset& data, std::size_t d_out);

/// n rows picked without replacement, returned in ascending index order.
Dataset random_subsample(const Dataset& data, std::size_t n, std::uint64_t seed);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace partial_em
