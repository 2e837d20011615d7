#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "fdrag/error.hpp"
#include "fdrag/http.hpp"
#include "fdrag/rng.hpp"
#include "fdrag/text.hpp"

namespace fdrag {

inline std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

/// Cache key of a text: hex SHA-256 of its normalized form.
inline std::string content_key(std::string_view s) { return sha256_hex(text::normalize(s)); }

/// N x D matrix of row-normalized embeddings.
struct EmbeddingMatrix {
    Eigen::MatrixXd values;
    std::size_t zero_vector_warnings = 0;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index dim() const { return values.cols(); }
    Eigen::VectorXd row(Eigen::Index i) const { return values.row(i).transpose(); }
};

/// Unit vector substituted for texts that embed to zero.
inline Eigen::VectorXd fallback_unit_vector(Eigen::Index dim) {
    return Eigen::VectorXd::Constant(dim, 1.0 / std::sqrt(static_cast<double>(dim)));
}

/// Normalizes `v` in place; returns false (and writes the fallback) when the
/// vector is zero or non-finite.
inline bool normalize_or_fallback(Eigen::Ref<Eigen::VectorXd> v) {
    const double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
        v = fallback_unit_vector(v.size());
        return false;
    }
    v /= n;
    return true;
}

/// Dot product of two unit vectors clamped to [-1, 1].
inline double cosine(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& v) {
    if (u.size() != v.size())
        throw InputError("cosine: dimension mismatch " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
    return std::clamp(u.dot(v), -1.0, 1.0);
}

enum class ProviderKind { hash, file, http };

struct EmbeddingProviderConfig {
    ProviderKind kind = ProviderKind::hash;
    int dim = 64;
    std::uint64_t seed = 0;
    std::string cache_path;  // file / http
    std::string endpoint;    // http
    std::string model;       // http
    std::string api_key_env = "FDRAG_EMBED_API_KEY";
    http::RetryPolicy retry{};

    void validate() const {
        if (dim < 2) throw InputError("embedding dim must be >= 2");
        if (kind == ProviderKind::http && endpoint.empty()) throw InputError("http embedding provider requires an endpoint");
        if (kind == ProviderKind::file && cache_path.empty()) throw InputError("file embedding provider requires cache_path");
    }
};

/// Persistent map content-key -> vector. Writes are serialized.
class EmbeddingCache {
public:
    EmbeddingCache() = default;
    explicit EmbeddingCache(std::filesystem::path path) : path_(std::move(path)) {
        if (!path_.empty() && std::filesystem::exists(path_)) {
            std::ifstream in(path_);
            const auto j = nlohmann::json::parse(in);
            for (const auto& [k, v] : j.items()) entries_[k] = v.get<std::vector<double>>();
        }
    }

    std::optional<std::vector<double>> find(const std::string& key) const {
        std::lock_guard lock(mu_);
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    void put(const std::string& key, std::vector<double> v) {
        std::lock_guard lock(mu_);
        entries_[key] = std::move(v);
    }

    void save() const {
        if (path_.empty()) return;
        std::lock_guard lock(mu_);
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [k, v] : entries_) j[k] = v;
        std::ofstream out(path_);
        out << j.dump();
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return entries_.size();
    }

private:
    std::filesystem::path path_;
    mutable std::mutex mu_;
    std::map<std::string, std::vector<double>> entries_;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual EmbeddingMatrix embed_batch(const std::vector<std::string>& texts) = 0;
    virtual int dim() const = 0;

    Eigen::VectorXd embed_one(const std::string& s) { return embed_batch({s}).row(0); }

    /// Total number of zero-vector substitutions so far.
    std::size_t warnings() const { return warnings_.load(); }

protected:
    std::atomic<std::size_t> warnings_{0};
};

/// Signed feature hashing of character 3- to 5-grams of the normalized text.
class HashEmbedder final : public EmbeddingProvider {
public:
    HashEmbedder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
        if (dim < 2) throw InputError("embedding dim must be >= 2");
    }

    int dim() const override { return dim_; }

    Eigen::VectorXd raw_features(const std::string& s) const {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(dim_);
        const std::string padded = " " + text::normalize(s) + " ";
        std::vector<std::size_t> offsets;
        for (std::size_t i = 0; i < padded.size();) {
            offsets.push_back(i);
            text::next_cp(padded, i);
        }
        offsets.push_back(padded.size());
        const std::size_t ncp = offsets.size() - 1;
        const std::uint64_t basis = mix64(seed_ ^ 0x6a09e667f3bcc908ULL);
        for (std::size_t n = 3; n <= 5; ++n) {
            for (std::size_t i = 0; i + n <= ncp; ++i) {
                const std::string_view gram(padded.data() + offsets[i], offsets[i + n] - offsets[i]);
                const std::uint64_t h = mix64(fnv1a64(gram, basis));
                const auto bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim_));
                v[bucket] += (h >> 63) ? -1.0 : 1.0;
            }
        }
        return v;
    }

    EmbeddingMatrix embed_batch(const std::vector<std::string>& texts) override {
        if (texts.empty()) throw InputError("embed_batch: no texts");
        EmbeddingMatrix m;
        m.values.resize(static_cast<Eigen::Index>(texts.size()), dim_);
        for (std::size_t i = 0; i < texts.size(); ++i) {
            Eigen::VectorXd v = raw_features(texts[i]);
            if (!normalize_or_fallback(v)) ++m.zero_vector_warnings;
            m.values.row(static_cast<Eigen::Index>(i)) = v.transpose();
        }
        warnings_ += m.zero_vector_warnings;
        return m;
    }

private:
    int dim_;
    std::uint64_t seed_;
};

/// Lookup in a persisted cache; misses are errors.
class FileEmbedder final : public EmbeddingProvider {
public:
    FileEmbedder(std::shared_ptr<EmbeddingCache> cache, int dim) : cache_(std::move(cache)), dim_(dim) {}

    int dim() const override { return dim_; }

    EmbeddingMatrix embed_batch(const std::vector<std::string>& texts) override {
        if (texts.empty()) throw InputError("embed_batch: no texts");
        EmbeddingMatrix m;
        m.values.resize(static_cast<Eigen::Index>(texts.size()), dim_);
        for (std::size_t i = 0; i < texts.size(); ++i) {
            const auto key = content_key(texts[i]);
            auto hit = cache_->find(key);
            if (!hit) throw InputError("embedding cache miss for key " + key);
            if (static_cast<int>(hit->size()) != dim_) throw InputError("cached embedding has wrong dimension: " + key);
            Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(hit->data(), dim_);
            if (!normalize_or_fallback(v)) ++m.zero_vector_warnings;
            m.values.row(static_cast<Eigen::Index>(i)) = v.transpose();
        }
        warnings_ += m.zero_vector_warnings;
        return m;
    }

private:
    std::shared_ptr<EmbeddingCache> cache_;
    int dim_;
};

/// Remote embeddings endpoint ({"input": [...], "model": ...} ->
/// {"data": [{"embedding": [...]}]}), with write-through caching.
class HttpEmbedder final : public EmbeddingProvider {
public:
    HttpEmbedder(EmbeddingProviderConfig cfg, std::shared_ptr<EmbeddingCache> cache)
        : cfg_(std::move(cfg)), cache_(std::move(cache)) {}

    int dim() const override { return cfg_.dim; }

    EmbeddingMatrix embed_batch(const std::vector<std::string>& texts) override {
        if (texts.empty()) throw InputError("embed_batch: no texts");
        std::vector<std::string> keys;
        std::vector<std::size_t> missing;
        for (std::size_t i = 0; i < texts.size(); ++i) {
            keys.push_back(content_key(texts[i]));
            if (!cache_->find(keys.back())) missing.push_back(i);
        }
        if (!missing.empty()) {
            nlohmann::json payload{{"model", cfg_.model}, {"input", nlohmann::json::array()}};
            for (auto i : missing) payload["input"].push_back(texts[i]);
            httplib::Headers headers;
            if (const char* key = std::getenv(cfg_.api_key_env.c_str())) headers.emplace("Authorization", std::string("Bearer ") + key);
            const auto resp = http::post_json(cfg_.endpoint, payload, headers, cfg_.retry);
            const auto& data = resp.body.at("data");
            if (!data.is_array() || data.size() != missing.size())
                throw TransportError("embedding response has wrong item count", resp.attempts);
            for (std::size_t k = 0; k < missing.size(); ++k) {
                auto v = data[k].at("embedding").get<std::vector<double>>();
                if (static_cast<int>(v.size()) != cfg_.dim) throw TransportError("embedding response has wrong dimension", resp.attempts);
                cache_->put(keys[missing[k]], std::move(v));
            }
            cache_->save();
        }
        EmbeddingMatrix m;
        m.values.resize(static_cast<Eigen::Index>(texts.size()), cfg_.dim);
        for (std::size_t i = 0; i < texts.size(); ++i) {
            auto hit = cache_->find(keys[i]);
            Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(hit->data(), cfg_.dim);
            if (!normalize_or_fallback(v)) ++m.zero_vector_warnings;
            m.values.row(static_cast<Eigen::Index>(i)) = v.transpose();
        }
        warnings_ += m.zero_vector_warnings;
        return m;
    }

private:
    EmbeddingProviderConfig cfg_;
    std::shared_ptr<EmbeddingCache> cache_;
};

inline std::unique_ptr<EmbeddingProvider> make_provider(const EmbeddingProviderConfig& cfg) {
    cfg.validate();
    switch (cfg.kind) {
        case ProviderKind::hash: return std::make_unique<HashEmbedder>(cfg.dim, cfg.seed);
        case ProviderKind::file:
            return std::make_unique<FileEmbedder>(std::make_shared<EmbeddingCache>(cfg.cache_path), cfg.dim);
        case ProviderKind::http:
            return std::make_unique<HttpEmbedder>(cfg, std::make_shared<EmbeddingCache>(cfg.cache_path));
    }
    throw InputError("unknown embedding provider kind");
}

} // namespace fdrag
