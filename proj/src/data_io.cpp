#include "partial_em/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <nlohmann/json.hpp>
#include <sstream>

#include "partial_em/error.hpp"
#include "partial_em/rng.hpp"

namespace partial_em {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset, const char* what) {
    if (bytes.size() < offset + 4) {
        throw TruncatedFile(std::string(what) + " file is truncated in its header");
    }
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open " + path);
    }
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open " + path + " for writing");
    }
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_cells(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) return cells;
        start = pos + 1;
    }
}

bool parse_number(std::string_view cell, double& out) {
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    const auto* end = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(cell.data(), end, out);
    return ec == std::errc{} && ptr == end && !cell.empty();
}

bool parse_label(std::string_view cell, int& out) {
    double v = 0.0;
    if (!parse_number(cell, v) || v != std::floor(v) || std::abs(v) > 2147483647.0) return false;
    out = static_cast<int>(v);
    return true;
}

Matrix parse_matrix(const nlohmann::json& j, const char* what) {
    if (!j.is_array() || j.empty()) throw InvalidArgument(std::string(what) + " must be a non-empty array");
    const std::size_t rows = j.size();
    const std::size_t cols = j[0].size();
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols) throw InvalidArgument(std::string(what) + " is ragged");
        for (std::size_t c = 0; c < cols; ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
        }
    }
    return m;
}

}  // namespace

void MixtureSpec::validate() const {
    const auto k = weights.size();
    if (k < 1 || means.rows() != k || static_cast<Eigen::Index>(covariances.size()) != k) {
        throw InvalidArgument("mixture spec needs matching weights, means and covariances");
    }
    if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-9) {
        throw InvalidArgument("mixture spec weights must form a probability vector");
    }
    for (const auto& c : covariances) {
        if (c.rows() != means.cols() || c.cols() != means.cols()) {
            throw DimensionMismatch("mixture spec covariance has the wrong shape");
        }
        Eigen::LLT<Matrix> llt(c);
        if (llt.info() != Eigen::Success) {
            throw InvalidArgument("mixture spec covariance is not positive definite");
        }
    }
}

MixtureSpec example1_spec() {
    MixtureSpec spec;
    spec.weights = Vector{{0.3, 0.7}};
    spec.means = Matrix{{-2.0}, {2.0}};
    spec.covariances = {Matrix::Identity(1, 1), Matrix::Identity(1, 1)};
    return spec;
}

Dataset sample_mixture(const MixtureSpec& spec, std::size_t n, std::uint64_t seed) {
    spec.validate();
    if (n < 1) {
        throw InvalidArgument("sample size must be at least 1");
    }
    const auto k = spec.weights.size();
    const auto d = spec.means.cols();
    std::vector<Matrix> factors;
    for (const auto& c : spec.covariances) factors.emplace_back(Eigen::LLT<Matrix>(c).matrixL());

    Rng rng(seed);
    Dataset out;
    out.points.resize(static_cast<Eigen::Index>(n), d);
    std::vector<int> labels(n);
    Vector z(d);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform();
        Eigen::Index comp = k - 1;
        double acc = 0.0;
        for (Eigen::Index j = 0; j < k; ++j) {
            acc += spec.weights[j];
            if (u < acc) {
                comp = j;
                break;
            }
        }
        for (Eigen::Index j = 0; j < d; ++j) z[j] = rng.normal();
        out.points.row(static_cast<Eigen::Index>(i)) = (spec.means.row(comp).transpose() + factors[static_cast<std::size_t>(comp)] * z).transpose();
        labels[i] = static_cast<int>(comp);
    }
    out.labels = std::move(labels);
    return out;
}

MixtureSpec mixture_spec_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("bad mixture spec: ") + e.what());
    }
    MixtureSpec spec;
    try {
        const auto w = j.at("weights").get<std::vector<double>>();
        spec.weights = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
        spec.means = parse_matrix(j.at("means"), "means");
        for (const auto& c : j.at("covariances")) spec.covariances.push_back(parse_matrix(c, "covariance"));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("bad mixture spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

IdxImages parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels,
                    const std::optional<std::set<int>>& keep_digits) {
    if (read_be32(images, 0, "image") != kImageMagic) {
        throw BadMagic("image file does not start with 0x00000803");
    }
    if (read_be32(labels, 0, "label") != kLabelMagic) {
        throw BadMagic("label file does not start with 0x00000801");
    }
    const std::uint32_t count = read_be32(images, 4, "image");
    const std::uint32_t rows = read_be32(images, 8, "image");
    const std::uint32_t cols = read_be32(images, 12, "image");
    const std::uint32_t label_count = read_be32(labels, 4, "label");
    if (count != label_count) {
        throw CountMismatch("image file holds " + std::to_string(count) + " images but label file holds " +
                            std::to_string(label_count) + " labels");
    }
    const std::size_t pixels = std::size_t{rows} * cols;
    if (images.size() < 16 + count * pixels) throw TruncatedFile("image file is truncated");
    if (labels.size() < 8 + std::size_t{count}) throw TruncatedFile("label file is truncated");
    if (images.size() != 16 + count * pixels || labels.size() != 8 + std::size_t{count}) {
        throw CountMismatch("IDX file is longer than its header says");
    }

    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < count; ++i) {
        if (!keep_digits || keep_digits->contains(labels[8 + i])) kept.push_back(i);
    }
    IdxImages out;
    out.rows = rows;
    out.cols = cols;
    out.data.points.resize(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(pixels));
    std::vector<int> kept_labels;
    kept_labels.reserve(kept.size());
    for (std::size_t r = 0; r < kept.size(); ++r) {
        const std::uint8_t* src = images.data() + 16 + kept[r] * pixels;
        for (std::size_t p = 0; p < pixels; ++p) {
            out.data.points(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p)) = src[p] / 255.0;
        }
        kept_labels.push_back(labels[8 + kept[r]]);
    }
    out.data.labels = std::move(kept_labels);
    return out;
}

IdxImages load_idx(const std::string& images_path, const std::string& labels_path,
                   const std::optional<std::set<int>>& keep_digits) {
    const auto images = read_bytes(images_path);
    const auto labels = read_bytes(labels_path);
    return parse_idx(images, labels, keep_digits);
}

std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> serialize_idx(const IdxImages& idx) {
    const auto n = static_cast<std::uint32_t>(idx.data.size());
    const std::size_t pixels = std::size_t{idx.rows} * idx.cols;
    if (static_cast<std::size_t>(idx.data.dim()) != pixels && n > 0) {
        throw DimensionMismatch("image rows x cols does not match the dataset width");
    }
    std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> out;
    auto& [images, labels] = out;
    write_be32(images, kImageMagic);
    write_be32(images, n);
    write_be32(images, idx.rows);
    write_be32(images, idx.cols);
    images.reserve(16 + n * pixels);
    for (Eigen::Index r = 0; r < idx.data.points.rows(); ++r) {
        for (Eigen::Index p = 0; p < idx.data.points.cols(); ++p) {
            const double v = std::round(idx.data.points(r, p) * 255.0);
            images.push_back(static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0)));
        }
    }
    write_be32(labels, kLabelMagic);
    write_be32(labels, n);
    for (std::uint32_t i = 0; i < n; ++i) {
        labels.push_back(idx.data.labels ? static_cast<std::uint8_t>((*idx.data.labels)[i]) : std::uint8_t{0});
    }
    return out;
}

void write_idx(const IdxImages& images, const std::string& images_path, const std::string& labels_path) {
    const auto [img, lab] = serialize_idx(images);
    write_bytes(images_path, img);
    write_bytes(labels_path, lab);
}

Dataset parse_csv(const std::string& text, bool has_labels) {
    std::vector<std::string_view> lines;
    {
        std::string_view rest(text);
        while (!rest.empty()) {
            const auto pos = rest.find('\n');
            lines.push_back(rest.substr(0, pos));
            if (pos == std::string_view::npos) break;
            rest.remove_prefix(pos + 1);
        }
        while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    }

    std::size_t first = 0;
    if (!lines.empty()) {
        double scratch = 0.0;
        const auto cells = split_cells(lines[0]);
        const bool numeric = std::all_of(cells.begin(), cells.end(), [&](auto c) { return parse_number(c, scratch); });
        if (!numeric) first = 1;
    }

    std::size_t width = 0;
    std::vector<double> values;
    std::vector<int> labels;
    for (std::size_t li = first; li < lines.size(); ++li) {
        const auto cells = split_cells(lines[li]);
        if (li == first) {
            width = cells.size();
            if (has_labels && width < 2) {
                throw InvalidArgument("labeled CSV needs at least one feature column and the label column");
            }
        } else if (cells.size() != width) {
            throw RaggedRows("row " + std::to_string(li + 1) + " has " + std::to_string(cells.size()) +
                             " columns, expected " + std::to_string(width));
        }
        const std::size_t features = has_labels ? width - 1 : width;
        for (std::size_t c = 0; c < features; ++c) {
            double v = 0.0;
            if (!parse_number(cells[c], v) || !std::isfinite(v)) {
                throw ParseError(li + 1, c + 1, "not a finite number: '" + std::string(cells[c]) + "'");
            }
            values.push_back(v);
        }
        if (has_labels) {
            int label = 0;
            if (!parse_label(cells[width - 1], label)) {
                throw ParseError(li + 1, width, "not an integer label: '" + std::string(cells[width - 1]) + "'");
            }
            labels.push_back(label);
        }
    }

    Dataset out;
    const std::size_t features = width == 0 ? 0 : (has_labels ? width - 1 : width);
    const std::size_t rows = features == 0 ? 0 : values.size() / features;
    out.points = Eigen::Map<const RowMatrix>(values.data(), static_cast<Eigen::Index>(rows),
                                             static_cast<Eigen::Index>(features));
    if (has_labels) out.labels = std::move(labels);
    return out;
}

Dataset load_csv(const std::string& path, bool has_labels) { return parse_csv(read_file(path), has_labels); }

std::string dataset_to_csv(const Dataset& data) {
    std::string out;
    for (Eigen::Index c = 0; c < data.dim(); ++c) {
        if (c) out += ',';
        out += "x" + std::to_string(c);
    }
    if (data.labels) out += ",label";
    out += '\n';
    char buf[32];
    for (Eigen::Index r = 0; r < data.points.rows(); ++r) {
        for (Eigen::Index c = 0; c < data.dim(); ++c) {
            std::snprintf(buf, sizeof buf, c ? ",%.17g" : "%.17g", data.points(r, c));
            out += buf;
        }
        if (data.labels) out += "," + std::to_string((*data.labels)[static_cast<std::size_t>(r)]);
        out += '\n';
    }
    return out;
}

void save_csv(const Dataset& data, const std::string& path) { write_file(path, dataset_to_csv(data)); }

Dataset PcaTransform::apply(const Dataset& data) const {
    if (data.dim() != mean.size()) {
        throw DimensionMismatch("PCA was fitted on " + std::to_string(mean.size()) + " dimensions, data has " +
                                std::to_string(data.dim()));
    }
    Dataset out;
    out.points = (data.points.rowwise() - mean.transpose()) * basis;
    out.labels = data.labels;
    return out;
}

PcaTransform fit_pca(const Dataset& data, std::size_t d_out) {
    const std::size_t n = data.size();
    const auto big_d = static_cast<std::size_t>(data.dim());
    if (d_out < 1 || d_out > std::min(n, big_d)) {
        throw InvalidArgument("PCA output dimension must lie in [1, min(N, D)]");
    }
    PcaTransform t;
    t.mean = data.points.colwise().mean().transpose();
    const Matrix centered = data.points.rowwise() - t.mean.transpose();
    const Matrix cov = centered.transpose() * centered / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    if (eig.info() != Eigen::Success) {
        throw RankDeficient("eigendecomposition failed");
    }
    const Vector& values = eig.eigenvalues();  // ascending
    const double top = values[values.size() - 1];
    const double floor = std::max(top, 0.0) * 1e-12;
    const auto take = static_cast<Eigen::Index>(d_out);
    for (Eigen::Index i = 0; i < take; ++i) {
        if (!(values[values.size() - 1 - i] > floor)) {
            throw RankDeficient("data has fewer than " + std::to_string(d_out) + " directions of positive variance");
        }
    }
    t.basis.resize(static_cast<Eigen::Index>(big_d), take);
    t.explained_variance.resize(take);
    for (Eigen::Index i = 0; i < take; ++i) {
        const Eigen::Index src = values.size() - 1 - i;
        Vector v = eig.eigenvectors().col(src);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0.0) v = -v;
        t.basis.col(i) = v;
        t.explained_variance[i] = values[src];
    }
    return t;
}

Dataset random_subsample(const Dataset& data, std::size_t n, std::uint64_t seed) {
    const std::size_t total = data.size();
    if (n > total) {
        throw InvalidArgument("cannot subsample " + std::to_string(n) + " of " + std::to_string(total) + " points");
    }
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        std::swap(order[i], order[i + static_cast<std::size_t>(rng.below(total - i))]);
    }
    order.resize(n);
    std::sort(order.begin(), order.end());
    return data.subset(order);
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open " + path);
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open " + path + " for writing");
    }
    f << contents;
}

}  // namespace partial_em
