#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "htd/hybridnet.hpp"
#include "htd/tensor.hpp"
#include "htd/textproc.hpp"
#include "htd/train.hpp"

// On-disk artifacts of a trained model: a binary weights archive, a text
// tokenizer file and a JSON configuration document.
namespace htd::persist {

class PersistError : public std::runtime_error {
public:
    enum class Kind {
        BadMagic,
        UnsupportedVersion,
        TruncatedFile,
        DuplicateTensorName,
        VersionMismatch,
        MissingField,
        BadValue,
        Io
    };

    PersistError(Kind kind, std::string field, const std::string& what)
        : std::runtime_error(what), kind_(kind), field_(std::move(field))
    {
    }
    Kind kind() const noexcept { return kind_; }
    // Missing or invalid field / tensor name, when there is one.
    const std::string& field() const noexcept { return field_; }

private:
    Kind kind_;
    std::string field_;
};

inline constexpr char kWeightsMagic[4] = {'H', 'T', 'D', 'W'};
inline constexpr std::uint32_t kWeightsVersion = 1;
inline constexpr std::string_view kTokenizerTag = "HTDT";
inline constexpr std::string_view kTokenizerVersion = "v1";
inline constexpr int kConfigVersion = 1;

inline constexpr const char* kWeightsFile = "weights.htdw";
inline constexpr const char* kTokenizerFile = "tokenizer.txt";
inline constexpr const char* kConfigFile = "config.json";

struct NamedTensor {
    std::string name;
    Tensor value;
};

// Layout: "HTDW", u32 version, u32 count, then per tensor: u32 name length,
// name bytes, u32 rank, rank x u32 dims, product(dims) x f32 values. All
// integers and floats little-endian.
void write_tensors(const std::vector<NamedTensor>& tensors, std::ostream& out);
std::vector<NamedTensor> read_tensors(std::istream& in);

/// Rounds every value to the nearest float, as storage does.
Tensor round_to_f32(const Tensor& t);
net::HybridModelParams round_to_f32(const net::HybridModelParams& p);

/// Tensors of the model, plus any extras (e.g. TF-IDF statistics).
void save_weights(const net::HybridModelParams& params, const std::filesystem::path& path,
                  const std::vector<NamedTensor>& extra = {});
/// Rebuilds parameters from tensor names alone; unknown names are returned in
/// `extra` when it is non-null.
net::HybridModelParams load_weights(const std::filesystem::path& path, std::vector<NamedTensor>* extra = nullptr);
net::HybridModelParams params_from_tensors(std::vector<NamedTensor> tensors, std::vector<NamedTensor>* extra);

void write_tokenizer(const text::Vocabulary& vocab, std::ostream& out);
text::Vocabulary read_tokenizer(std::istream& in);
void save_tokenizer(const text::Vocabulary& vocab, const std::filesystem::path& path);
text::Vocabulary load_tokenizer(const std::filesystem::path& path);

// Everything besides weights and vocabulary needed to rebuild and rerun a
// model.
struct ModelSettings {
    net::ModelConfig model;
    net::TrainHyper hyper;
    std::size_t max_vocab = 20000; // includes the two reserved ids
    std::size_t min_df = 1;
    std::uint64_t split_seed = 42;
    double split_ratio = 0.7;
    double val_ratio = 0.9; // share of the training split kept for fitting
    std::size_t tfidf_documents = 0;

    friend bool operator==(const ModelSettings&, const ModelSettings&) = default;
};

nlohmann::json to_json(const ModelSettings& s);
/// Throws MissingField(name) for absent required fields; unrecognised fields
/// are reported through `warnings`.
ModelSettings settings_from_json(const nlohmann::json& j, std::vector<std::string>* warnings = nullptr);

void save_config(const ModelSettings& settings, const std::filesystem::path& path);
ModelSettings load_config(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

struct ModelBundle {
    ModelSettings settings;
    net::TextContext context;
    net::HybridModelParams params;
};

/// Writes the three artifacts into `dir` (created if needed).
void save_model(const ModelBundle& bundle, const std::filesystem::path& dir);
ModelBundle load_model(const std::filesystem::path& dir, std::vector<std::string>* warnings = nullptr);

} // namespace htd::persist
