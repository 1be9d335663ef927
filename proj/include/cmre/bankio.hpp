#ifndef CMRE_BANKIO_HPP_
#define CMRE_BANKIO_HPP_

#include <string>
#include <vector>

#include "cmre/evalkit.hpp"
#include "cmre/numerics.hpp"
#include "cmre/toytrain.hpp"

namespace cmre {

// Binary feature bank: magic "CMRE", u16 version, u32 count, u32 dim, then
// count*dim little-endian IEEE-754 float32 values, row-major.
inline constexpr char kBankMagic[4] = {'C', 'M', 'R', 'E'};
inline constexpr std::uint16_t kBankVersion = 1;

void write_feature_bank(const std::string& path, const Matrix& rows);
Matrix read_feature_bank(const std::string& path);

/// One sidecar record per bank row.
struct LabelRecord {
  int id = 0;
  Modality modality = Modality::visible;
  int camera = 0;
};

void write_label_sidecar(const std::string& path,
                         const std::vector<LabelRecord>& records);
std::vector<LabelRecord> read_label_sidecar(const std::string& path);

/// Sidecar path for a given .bank path (extension swap).
std::string sidecar_path(const std::string& bank_path);

void save_embedding_bank(const std::string& bank_path, const EmbeddingBank& bank);
EmbeddingBank load_embedding_bank(const std::string& bank_path);

/// Stripe banks are stored as count x (parts*dim) rows; parts is supplied on
/// load to recover the stripe structure.
void save_stripe_bank(const std::string& bank_path, const StripeBank& bank);
StripeBank load_stripe_bank(const std::string& bank_path, std::size_t parts);

// Flat key=value training configuration. Unknown keys and malformed values
// are errors; every field of TrainConfig has a key and keeps its default
// when absent.
TrainConfig parse_train_config_text(const std::string& text);
TrainConfig parse_train_config_file(const std::string& path);

// Model checkpoints: magic "CMCK", u16 version, dims, then all parameter and
// running-statistic blocks as little-endian float64.
void save_model(const std::string& path, const ToyModel& model);
ToyModel load_model(const std::string& path);

/// Per-step loss log CSV with the fixed column set
/// step,id_g,id_eg,tri_g,tri_eg,id_lv,id_lt,pa_vt,total,lr.
void write_loss_log(const std::string& path, const TrainResult& result);

/// Shortest-repr formatting used in all CSV output (round-trips doubles).
std::string format_double(double v);

}  // namespace cmre

#endif  // CMRE_BANKIO_HPP_
