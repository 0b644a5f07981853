#include "bflm/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "bflm/errors.hpp"

namespace bflm {

namespace {

constexpr char kMagic[4] = {'B', 'F', 'L', 'M'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

class Reader {
 public:
  Reader(const std::string& buf, std::string origin)
      : buf_(buf), origin_(std::move(origin)) {}

  std::uint32_t u32(const char* section) {
    need(4, section);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64(const char* section) {
    need(8, section);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64(const char* section) { return std::bit_cast<double>(u64(section)); }

  std::string bytes(std::size_t n, const char* section) {
    need(n, section);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }

  void need(std::size_t n, const char* section) {
    if (pos_ + n > buf_.size())
      throw DataError(origin_ + ": truncated checkpoint while reading " + section);
  }

 private:
  const std::string& buf_;
  std::string origin_;
  std::size_t pos_ = 0;
};

nlohmann::json train_config_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"lr0", c.lr0},
          {"lr_decay", c.lr_decay},
          {"rms_decay", c.rms_decay},
          {"epsilon", c.epsilon},
          {"clip", c.clip},
          {"max_epochs", c.max_epochs},
          {"seed", c.seed},
          {"embedding_lr_mode", to_string(c.embedding_lr_mode)},
          {"patience", c.patience}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.lr0 = j.at("lr0").get<double>();
  c.lr_decay = j.at("lr_decay").get<double>();
  c.rms_decay = j.at("rms_decay").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  c.clip = j.at("clip").get<double>();
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.embedding_lr_mode = embedding_lr_mode_from_string(j.at("embedding_lr_mode").get<std::string>());
  c.patience = j.at("patience").get<std::size_t>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const OptimizerState& opt,
                     const TrainConfig& train_cfg, const TrainProgress& progress,
                     const DetRng& rng, const std::string& vocab_hash) {
  const ParamStore& store = model.params();

  std::size_t tensor_count = store.size();
  for (std::size_t i = 0; i < store.size(); ++i)
    if (!opt.rms_cache.empty() && i < opt.rms_cache.size() && !opt.rms_cache[i].empty())
      ++tensor_count;

  nlohmann::json meta = {
      {"model",
       {{"variant", to_string(model.config().variant)},
        {"hidden", model.config().resolved_hidden()},
        {"embedding", model.config().embedding},
        {"vocab", model.config().vocab},
        {"seed", model.config().seed}}},
      {"train", train_config_json(train_cfg)},
      {"progress",
       {{"epoch", progress.epoch},
        {"best_val_ppl", progress.best_val_ppl},
        {"best_epoch", progress.best_epoch}}},
      {"optimizer", {{"lr", opt.lr}, {"epoch", opt.epoch}}},
      {"vocab_hash", vocab_hash},
      {"rng_state", rng.save_state()},
      {"tensor_count", tensor_count}};
  const std::string meta_str = meta.dump();

  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, meta_str.size());
  out += meta_str;

  auto put_tensor = [&out](const std::string& name, const Tensor& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.dims()) put_u64(out, d);
    for (double v : t.flat()) put_f64(out, v);
  };

  for (std::size_t i = 0; i < store.size(); ++i)
    put_tensor("p:" + store.entry(i).name, store.value(i));
  for (std::size_t i = 0; i < store.size(); ++i)
    if (i < opt.rms_cache.size() && !opt.rms_cache[i].empty())
      put_tensor("m:" + store.entry(i).name, opt.rms_cache[i]);

  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(out.data()), static_cast<uInt>(out.size())));
  put_u32(out, crc);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f.good()) throw IoError("write failure on checkpoint: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();

  if (buf.size() < 4 + 4 + 8 + 4) throw DataError(path + ": truncated checkpoint (header)");

  // checksum covers everything before the trailing u32
  const std::string body = buf.substr(0, buf.size() - 4);
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i)
    stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[buf.size() - 4 + i]))
              << (8 * i);
  const auto computed = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
  if (stored != computed) throw DataError(path + ": checksum mismatch (corrupt checkpoint)");

  Reader r(body, path);
  if (r.bytes(4, "magic") != std::string(kMagic, 4))
    throw DataError(path + ": bad magic bytes (not a checkpoint)");
  const std::uint32_t version = r.u32("version");
  if (version != kVersion)
    throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t meta_len = r.u64("metadata length");
  const std::string meta_str = r.bytes(meta_len, "metadata");

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_str);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": malformed metadata: " + e.what());
  }

  Checkpoint ck;
  try {
    const auto& jm = meta.at("model");
    ck.model_config.variant = variant_from_string(jm.at("variant").get<std::string>());
    ck.model_config.hidden = jm.at("hidden").get<std::size_t>();
    ck.model_config.embedding = jm.at("embedding").get<std::size_t>();
    ck.model_config.vocab = jm.at("vocab").get<std::size_t>();
    ck.model_config.seed = jm.at("seed").get<std::uint64_t>();
    ck.train_config = train_config_from_json(meta.at("train"));
    ck.progress.epoch = meta.at("progress").at("epoch").get<std::size_t>();
    const auto& best = meta.at("progress").at("best_val_ppl");
    ck.progress.best_val_ppl =
        best.is_null() ? std::numeric_limits<double>::infinity() : best.get<double>();
    ck.progress.best_epoch = meta.at("progress").at("best_epoch").get<std::size_t>();
    ck.lr = meta.at("optimizer").at("lr").get<double>();
    ck.opt_epoch = meta.at("optimizer").at("epoch").get<std::size_t>();
    ck.vocab_hash = meta.at("vocab_hash").get<std::string>();
    ck.rng_state = meta.at("rng_state").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": metadata missing fields: " + e.what());
  }
  const auto tensor_count = meta.at("tensor_count").get<std::uint64_t>();

  for (std::uint64_t i = 0; i < tensor_count; ++i) {
    const std::uint32_t name_len = r.u32("tensor name length");
    std::string name = r.bytes(name_len, "tensor name");
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank == 0 || rank > 8) throw DataError(path + ": implausible tensor rank in " + name);
    std::vector<std::size_t> dims(rank);
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      dims[d] = r.u64("tensor dims");
      total *= dims[d];
    }
    std::vector<double> data(total);
    for (std::size_t k = 0; k < total; ++k) data[k] = r.f64("tensor data");
    ck.tensors.emplace_back(std::move(name), Tensor(std::move(dims), std::move(data)));
  }
  if (r.pos() != body.size()) throw DataError(path + ": trailing bytes after tensor table");
  return ck;
}

LoadedModel load_checkpoint(const std::string& path) {
  Checkpoint ck = read_checkpoint(path);

  LoadedModel lm{Model(ck.model_config), OptimizerState{}, ck.train_config, ck.progress,
                 DetRng(0),              ck.vocab_hash};
  lm.opt = OptimizerState::fresh(lm.model.params(), ck.train_config);
  lm.opt.lr = ck.lr;
  lm.opt.epoch = ck.opt_epoch;
  lm.rng.load_state(ck.rng_state);

  ParamStore& store = lm.model.params();
  std::size_t loaded = 0;
  for (auto& [name, tensor] : ck.tensors) {
    if (name.size() < 3 || name[1] != ':')
      throw DataError(path + ": unrecognized tensor record name '" + name + "'");
    const std::string base = name.substr(2);
    const std::size_t idx = store.contains(base)
                                ? store.index_of(base)
                                : throw DataError(path + ": tensor '" + base +
                                                  "' does not belong to this model");
    if (name[0] == 'p') {
      if (!store.value(idx).same_shape(tensor))
        throw DataError(path + ": shape mismatch for parameter " + base);
      store.value(idx) = std::move(tensor);
      ++loaded;
    } else if (name[0] == 'm') {
      if (lm.opt.rms_cache[idx].empty() || !lm.opt.rms_cache[idx].same_shape(tensor))
        throw DataError(path + ": shape mismatch for optimizer cache " + base);
      lm.opt.rms_cache[idx] = std::move(tensor);
    } else {
      throw DataError(path + ": unrecognized tensor kind '" + name.substr(0, 1) + "'");
    }
  }
  if (loaded != store.size())
    throw DataError(path + ": checkpoint is missing parameter tensors");
  return lm;
}

}  // namespace bflm
