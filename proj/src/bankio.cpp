#include "cmre/bankio.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace cmre {

namespace {

void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("bank io: truncated file");
}

template <typename T>
void write_pod(std::ostream& os, T v) {
  write_bytes(os, &v, sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v;
  read_bytes(is, &v, sizeof(T));
  return v;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("bank io: cannot write " + path);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("bank io: cannot read " + path);
  return is;
}

}  // namespace

void write_feature_bank(const std::string& path, const Matrix& rows) {
  std::ofstream os = open_out(path);
  write_bytes(os, kBankMagic, 4);
  write_pod<std::uint16_t>(os, kBankVersion);
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(rows.rows));
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(rows.cols));
  for (double v : rows.data) {
    write_pod<float>(os, static_cast<float>(v));
  }
  if (!os) throw std::runtime_error("bank io: write failed for " + path);
}

Matrix read_feature_bank(const std::string& path) {
  std::ifstream is = open_in(path);
  char magic[4];
  read_bytes(is, magic, 4);
  if (std::memcmp(magic, kBankMagic, 4) != 0) {
    throw std::runtime_error("bank io: bad magic in " + path);
  }
  const auto version = read_pod<std::uint16_t>(is);
  if (version != kBankVersion) {
    throw std::runtime_error("bank io: unsupported version in " + path);
  }
  const auto count = read_pod<std::uint32_t>(is);
  const auto dim = read_pod<std::uint32_t>(is);
  Matrix m(count, dim, 0.0);
  for (double& v : m.data) {
    v = static_cast<double>(read_pod<float>(is));
  }
  return m;
}

void write_label_sidecar(const std::string& path,
                         const std::vector<LabelRecord>& records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const LabelRecord& r : records) {
    arr.push_back({{"id", r.id},
                   {"modality", r.modality == Modality::visible ? "V" : "T"},
                   {"camera", r.camera}});
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("bank io: cannot write " + path);
  os << arr.dump(1) << "\n";
}

std::vector<LabelRecord> read_label_sidecar(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("bank io: cannot read " + path);
  nlohmann::json arr = nlohmann::json::parse(is);
  if (!arr.is_array()) {
    throw std::runtime_error("bank io: sidecar is not an array: " + path);
  }
  std::vector<LabelRecord> out;
  for (const auto& item : arr) {
    LabelRecord r;
    r.id = item.at("id").get<int>();
    const std::string m = item.at("modality").get<std::string>();
    if (m == "V") {
      r.modality = Modality::visible;
    } else if (m == "T") {
      r.modality = Modality::thermal;
    } else {
      throw std::runtime_error("bank io: bad modality '" + m + "' in " + path);
    }
    r.camera = item.at("camera").get<int>();
    out.push_back(r);
  }
  return out;
}

std::string sidecar_path(const std::string& bank_path) {
  const std::string suffix = ".bank";
  if (bank_path.size() > suffix.size() &&
      bank_path.compare(bank_path.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return bank_path.substr(0, bank_path.size() - suffix.size()) + ".labels.json";
  }
  return bank_path + ".labels.json";
}

void save_embedding_bank(const std::string& bank_path, const EmbeddingBank& bank) {
  Matrix m(bank.count, bank.dim, 0.0);
  m.data = bank.vectors;
  write_feature_bank(bank_path, m);
  std::vector<LabelRecord> records(bank.count);
  for (std::size_t i = 0; i < bank.count; ++i) {
    records[i] = {bank.identity[i], bank.modality[i],
                  bank.camera.empty() ? 0 : bank.camera[i]};
  }
  write_label_sidecar(sidecar_path(bank_path), records);
}

EmbeddingBank load_embedding_bank(const std::string& bank_path) {
  const Matrix m = read_feature_bank(bank_path);
  const std::vector<LabelRecord> records = read_label_sidecar(sidecar_path(bank_path));
  if (records.size() != m.rows) {
    throw std::runtime_error("bank io: sidecar row count mismatch for " + bank_path);
  }
  EmbeddingBank bank;
  bank.count = m.rows;
  bank.dim = m.cols;
  bank.vectors = m.data;
  for (const LabelRecord& r : records) {
    bank.identity.push_back(r.id);
    bank.modality.push_back(r.modality);
    bank.camera.push_back(r.camera);
  }
  return bank;
}

void save_stripe_bank(const std::string& bank_path, const StripeBank& bank) {
  Matrix m(bank.count, bank.parts * bank.dim, 0.0);
  m.data = bank.data;
  write_feature_bank(bank_path, m);
  std::vector<LabelRecord> records(bank.count);
  for (std::size_t i = 0; i < bank.count; ++i) {
    records[i] = {bank.identity[i], bank.modality[i],
                  bank.camera.empty() ? 0 : bank.camera[i]};
  }
  write_label_sidecar(sidecar_path(bank_path), records);
}

StripeBank load_stripe_bank(const std::string& bank_path, std::size_t parts) {
  if (parts == 0) throw std::runtime_error("bank io: parts must be >= 1");
  EmbeddingBank flat = load_embedding_bank(bank_path);
  if (flat.dim % parts != 0) {
    throw std::runtime_error("bank io: bank dim not divisible by parts");
  }
  StripeBank bank;
  bank.count = flat.count;
  bank.parts = parts;
  bank.dim = flat.dim / parts;
  bank.data = std::move(flat.vectors);
  bank.identity = std::move(flat.identity);
  bank.modality = std::move(flat.modality);
  bank.camera = std::move(flat.camera);
  return bank;
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw std::runtime_error("config: bad value for " + key + ": '" + value + "'");
  }
}

std::uint64_t parse_count(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size() || v < 0) throw std::invalid_argument("bad");
    return static_cast<std::uint64_t>(v);
  } catch (...) {
    throw std::runtime_error("config: bad value for " + key + ": '" + value + "'");
  }
}

}  // namespace

TrainConfig parse_train_config_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config: expected key=value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "P") {
      cfg.P = parse_count(key, value);
    } else if (key == "K") {
      cfg.K = parse_count(key, value);
    } else if (key == "parts") {
      cfg.parts = parse_count(key, value);
    } else if (key == "local_dim") {
      cfg.local_dim = parse_count(key, value);
    } else if (key == "m_g") {
      cfg.m_g = parse_real(key, value);
    } else if (key == "m_l") {
      cfg.m_l = parse_real(key, value);
    } else if (key == "eps") {
      cfg.eps = parse_real(key, value);
    } else if (key == "lr_backbone") {
      cfg.lr_backbone = parse_real(key, value);
    } else if (key == "lr_head") {
      cfg.lr_head = parse_real(key, value);
    } else if (key == "lr_decay_every") {
      cfg.lr_decay_every = parse_count(key, value);
    } else if (key == "lr_decay_factor") {
      cfg.lr_decay_factor = parse_real(key, value);
    } else if (key == "epochs") {
      cfg.epochs = parse_count(key, value);
    } else if (key == "seed") {
      cfg.seed = parse_count(key, value);
    } else if (key == "momentum") {
      cfg.momentum = parse_real(key, value);
    } else if (key == "embed_dim") {
      cfg.embed_dim = parse_count(key, value);
    } else if (key == "stream_dim") {
      cfg.stream_dim = parse_count(key, value);
    } else if (key == "fusion_dim") {
      cfg.fusion_dim = parse_count(key, value);
    } else if (key == "local_sum_start") {
      cfg.local_sum_start = static_cast<int>(parse_count(key, value));
    } else if (key == "bn_weight_mode") {
      if (value == "abs") {
        cfg.bn_weight_mode = BnWeightMode::abs_value;
      } else if (value == "signed") {
        cfg.bn_weight_mode = BnWeightMode::signed_value;
      } else {
        throw std::runtime_error("config: bn_weight_mode must be abs or signed");
      }
    } else {
      throw std::runtime_error("config: unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig parse_train_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot read " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_train_config_text(buf.str());
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kModelMagic[4] = {'C', 'M', 'C', 'K'};
constexpr std::uint16_t kModelVersion = 1;

void write_block(std::ostream& os, const std::vector<double>& v) {
  for (double x : v) write_pod<double>(os, x);
}

void read_block(std::istream& is, std::vector<double>& v) {
  for (double& x : v) x = read_pod<double>(is);
}

void write_linear(std::ostream& os, const Linear& l) {
  write_block(os, l.w);
  write_block(os, l.b);
}

void read_linear(std::istream& is, Linear& l) {
  read_block(is, l.w);
  read_block(is, l.b);
}

}  // namespace

void save_model(const std::string& path, const ToyModel& model) {
  std::ofstream os = open_out(path);
  write_bytes(os, kModelMagic, 4);
  write_pod<std::uint16_t>(os, kModelVersion);
  const ModelConfig& c = model.cfg;
  for (std::size_t v : {c.in_channels, c.height, c.width, c.stream_dim,
                        c.fusion_dim, c.embed_dim, c.local_dim, c.parts,
                        c.num_classes}) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(v));
  }
  write_pod<std::uint8_t>(os,
                          c.bn_weight_mode == BnWeightMode::abs_value ? 0 : 1);
  write_pod<double>(os, c.bn_eps);
  write_pod<double>(os, c.bn_momentum);
  write_linear(os, model.vmn);
  write_linear(os, model.tmn);
  write_linear(os, model.fmn1);
  write_linear(os, model.fmn2);
  write_linear(os, model.local_proj);
  write_linear(os, model.cls_global);
  write_linear(os, model.cls_enh);
  for (const Linear& head : model.cls_local) write_linear(os, head);
  write_block(os, model.bn.gamma);
  write_block(os, model.bn.beta);
  write_block(os, model.running.mean);
  write_block(os, model.running.var);
  if (!os) throw std::runtime_error("bank io: write failed for " + path);
}

ToyModel load_model(const std::string& path) {
  std::ifstream is = open_in(path);
  char magic[4];
  read_bytes(is, magic, 4);
  if (std::memcmp(magic, kModelMagic, 4) != 0) {
    throw std::runtime_error("bank io: bad checkpoint magic in " + path);
  }
  if (read_pod<std::uint16_t>(is) != kModelVersion) {
    throw std::runtime_error("bank io: unsupported checkpoint version in " + path);
  }
  ModelConfig c;
  c.in_channels = read_pod<std::uint32_t>(is);
  c.height = read_pod<std::uint32_t>(is);
  c.width = read_pod<std::uint32_t>(is);
  c.stream_dim = read_pod<std::uint32_t>(is);
  c.fusion_dim = read_pod<std::uint32_t>(is);
  c.embed_dim = read_pod<std::uint32_t>(is);
  c.local_dim = read_pod<std::uint32_t>(is);
  c.parts = read_pod<std::uint32_t>(is);
  c.num_classes = read_pod<std::uint32_t>(is);
  c.bn_weight_mode = read_pod<std::uint8_t>(is) == 0 ? BnWeightMode::abs_value
                                                     : BnWeightMode::signed_value;
  c.bn_eps = read_pod<double>(is);
  c.bn_momentum = read_pod<double>(is);

  ToyModel model;
  model.cfg = c;
  model.vmn = Linear(c.stream_dim, c.in_channels);
  model.tmn = Linear(c.stream_dim, c.in_channels);
  model.fmn1 = Linear(c.fusion_dim, c.stream_dim);
  model.fmn2 = Linear(c.embed_dim, c.fusion_dim);
  model.local_proj = Linear(c.local_dim, c.embed_dim);
  model.cls_global = Linear(c.num_classes, c.embed_dim);
  model.cls_enh = Linear(c.num_classes, c.embed_dim);
  model.cls_local.assign(c.parts, Linear(c.num_classes, c.local_dim));
  model.bn.gamma.resize(c.embed_dim);
  model.bn.beta.resize(c.embed_dim);
  model.bn.eps = c.bn_eps;
  model.running.mean.resize(c.embed_dim);
  model.running.var.resize(c.embed_dim);

  read_linear(is, model.vmn);
  read_linear(is, model.tmn);
  read_linear(is, model.fmn1);
  read_linear(is, model.fmn2);
  read_linear(is, model.local_proj);
  read_linear(is, model.cls_global);
  read_linear(is, model.cls_enh);
  for (Linear& head : model.cls_local) read_linear(is, head);
  read_block(is, model.bn.gamma);
  read_block(is, model.bn.beta);
  read_block(is, model.running.mean);
  read_block(is, model.running.var);
  return model;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_loss_log(const std::string& path, const TrainResult& result) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("bank io: cannot write " + path);
  os << "step,id_g,id_eg,tri_g,tri_eg,id_lv,id_lt,pa_vt,total,lr\n";
  for (const TrainStepLog& row : result.log) {
    const LossReport& r = row.report;
    os << row.step << ',' << format_double(r.id_g) << ',' << format_double(r.id_eg)
       << ',' << format_double(r.tri_g) << ',' << format_double(r.tri_eg) << ','
       << format_double(r.id_lv) << ',' << format_double(r.id_lt) << ','
       << format_double(r.pa_vt) << ',' << format_double(r.total) << ','
       << format_double(row.lr_backbone) << "\n";
  }
  if (!os) throw std::runtime_error("bank io: write failed for " + path);
}

}  // namespace cmre
