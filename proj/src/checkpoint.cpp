#include "d2sep/checkpoint.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace d2sep {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

std::string join_strs(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += v[i];
  }
  return s;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelF& net,
                     const StftConfig& stft, const CheckpointMeta& meta) {
  std::ostringstream os;
  const auto& c = net.config;
  os << "d2sep-checkpoint v1\n";
  os << "freq_bins " << c.freq_bins << "\n";
  os << "channels " << c.channels << "\n";
  os << "num_blocks " << c.num_blocks << "\n";
  os << "conv_dilations " << join_ints(c.conv_dilations) << "\n";
  os << "gru_dilations " << join_ints(c.gru_dilations) << "\n";
  os << "groups " << c.groups << "\n";
  os << "kernel " << c.kernel << "\n";
  os << "sources " << join_strs(c.sources) << "\n";
  os << "block_variant " << to_string(c.block_variant) << "\n";
  os << "window_size " << stft.window_size << "\n";
  os << "hop " << stft.hop << "\n";
  os << "sample_rate " << fmt_double(stft.sample_rate) << "\n";
  os << "epoch " << meta.epoch << "\n";
  os << "val_loss " << fmt_double(meta.val_loss) << "\n";
  os << "seed " << meta.seed << "\n";

  const auto params = net.parameters();
  const auto names = net.parameter_names();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    os << "param " << names[i] << " ";
    const auto& sh = params[i].shape();
    for (std::size_t d = 0; d < sh.size(); ++d) os << (d ? "," : "") << sh[d];
    os << " " << offset << "\n";
    offset += params[i].size();
  }
  os << "data " << offset << "\n";

  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot create checkpoint '" + path + "'");
  const std::string header = os.str();
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& p : params)
    f.write(reinterpret_cast<const char*>(p.data()),
            static_cast<std::streamsize>(p.size() * sizeof(float)));
  if (!f) throw io_error("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open checkpoint '" + path + "'");
  std::string line;
  if (!std::getline(f, line) || line != "d2sep-checkpoint v1")
    throw io_error("not a d2sep checkpoint: '" + path + "'");

  ModelConfig cfg;
  StftConfig stft;
  CheckpointMeta meta;
  struct ParamEntry {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset;
  };
  std::vector<ParamEntry> entries;
  std::size_t data_count = 0;

  while (std::getline(f, line)) {
    std::istringstream is(line);
    std::string key;
    is >> key;
    if (key == "freq_bins") is >> cfg.freq_bins;
    else if (key == "channels") is >> cfg.channels;
    else if (key == "num_blocks") is >> cfg.num_blocks;
    else if (key == "conv_dilations") {
      std::string v;
      is >> v;
      cfg.conv_dilations.clear();
      for (auto& s : split_commas(v)) cfg.conv_dilations.push_back(std::stoi(s));
    } else if (key == "gru_dilations") {
      std::string v;
      is >> v;
      cfg.gru_dilations.clear();
      for (auto& s : split_commas(v)) cfg.gru_dilations.push_back(std::stoi(s));
    } else if (key == "groups") is >> cfg.groups;
    else if (key == "kernel") is >> cfg.kernel;
    else if (key == "sources") {
      std::string v;
      is >> v;
      cfg.sources = split_commas(v);
    } else if (key == "block_variant") {
      std::string v;
      is >> v;
      cfg.block_variant = block_variant_from_string(v);
    } else if (key == "window_size") is >> stft.window_size;
    else if (key == "hop") is >> stft.hop;
    else if (key == "sample_rate") is >> stft.sample_rate;
    else if (key == "epoch") is >> meta.epoch;
    else if (key == "val_loss") is >> meta.val_loss;
    else if (key == "seed") is >> meta.seed;
    else if (key == "param") {
      ParamEntry e;
      std::string shape_s;
      is >> e.name >> shape_s >> e.offset;
      for (auto& s : split_commas(shape_s))
        e.shape.push_back(static_cast<std::size_t>(std::stoull(s)));
      entries.push_back(std::move(e));
    } else if (key == "data") {
      is >> data_count;
      break;
    } else {
      throw io_error("unknown checkpoint field '" + key + "'");
    }
  }

  Checkpoint ckpt;
  ckpt.stft = stft;
  ckpt.meta = meta;
  Rng rng(0);
  ckpt.net = ModelF::init(cfg, rng, /*requires_grad=*/true);

  auto params = ckpt.net.parameters();
  auto names = ckpt.net.parameter_names();
  if (params.size() != entries.size())
    throw io_error("checkpoint parameter count mismatch: file has " +
                   std::to_string(entries.size()) + ", architecture needs " +
                   std::to_string(params.size()));
  std::size_t total = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (entries[i].name != names[i])
      throw io_error("checkpoint parameter order mismatch at '" + entries[i].name + "'");
    if (entries[i].shape != params[i].shape())
      throw io_error("checkpoint shape mismatch for '" + entries[i].name + "'");
    if (entries[i].offset != total)
      throw io_error("checkpoint offset mismatch for '" + entries[i].name + "'");
    total += params[i].size();
  }
  if (total != data_count) throw io_error("checkpoint data count mismatch");

  for (auto& p : params) {
    f.read(reinterpret_cast<char*>(p.data()),
           static_cast<std::streamsize>(p.size() * sizeof(float)));
    if (f.gcount() != static_cast<std::streamsize>(p.size() * sizeof(float)))
      throw io_error("checkpoint truncated");
  }
  return ckpt;
}

}  // namespace d2sep
