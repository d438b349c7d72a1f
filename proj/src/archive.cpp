#include "amtgan/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "amtgan/digest.hpp"
#include "amtgan/error.hpp"

namespace amtgan {

namespace {

constexpr char kMagic[8] = {'A', 'M', 'T', 'G', 'A', 'N', '0', '1'};

void append_le32(std::string& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

float read_le32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

void Archive::put(const std::string& name, const Tensor& tensor) {
  const Tensor t = tensor.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  TensorBlock b{name, t.sizes().vec(), {}};
  b.values.assign(t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
  for (auto& existing : blocks) {
    if (existing.name == name) {
      existing = std::move(b);
      return;
    }
  }
  blocks.push_back(std::move(b));
}

bool Archive::contains(const std::string& name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return true;
  }
  return false;
}

Tensor Archive::get(const std::string& name) const {
  for (const auto& b : blocks) {
    if (b.name != name) continue;
    return torch::tensor(b.values, torch::kFloat32).reshape(b.shape).clone();
  }
  throw IntegrityError("archive has no block named " + name);
}

std::string encode_archive(const Archive& archive) {
  std::string payload;
  nlohmann::json index = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& b : archive.blocks) {
    index.push_back({{"name", b.name}, {"shape", b.shape}, {"offset", offset}, {"count", b.values.size()}});
    for (float v : b.values) append_le32(payload, v);
    offset += b.values.size();
  }
  const nlohmann::json header = {{"meta", archive.meta},
                                 {"blocks", index},
                                 {"payload_bytes", payload.size()},
                                 {"payload_sha256", sha256_hex(payload)}};
  const std::string text = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  const auto len = static_cast<std::uint64_t>(text.size());
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xffu));
  out += text;
  out += payload;
  return out;
}

Archive decode_archive(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IntegrityError("not an archive (bad magic or truncated)");
  }
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  if (len > bytes.size() - 16) throw IntegrityError("archive header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, len));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("archive header is not valid JSON: ") + e.what());
  }
  const std::string payload = bytes.substr(16 + len);
  try {
    if (payload.size() != header.at("payload_bytes").get<std::size_t>()) {
      throw IntegrityError("archive payload size mismatch (truncated file?)");
    }
    if (sha256_hex(payload) != header.at("payload_sha256").get<std::string>()) {
      throw IntegrityError("archive payload checksum mismatch");
    }
    Archive a;
    a.meta = header.at("meta");
    const auto* data = reinterpret_cast<const unsigned char*>(payload.data());
    for (const auto& entry : header.at("blocks")) {
      TensorBlock b;
      b.name = entry.at("name").get<std::string>();
      b.shape = entry.at("shape").get<std::vector<int64_t>>();
      const auto off = entry.at("offset").get<std::size_t>();
      const auto count = entry.at("count").get<std::size_t>();
      int64_t expected = 1;
      for (auto d : b.shape) expected *= d;
      if (static_cast<std::size_t>(expected) != count || (off + count) * 4 > payload.size()) {
        throw IntegrityError("archive block " + b.name + " is inconsistent");
      }
      b.values.resize(count);
      for (std::size_t i = 0; i < count; ++i) b.values[i] = read_le32(data + (off + i) * 4);
      a.blocks.push_back(std::move(b));
    }
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("archive header is malformed: ") + e.what());
  }
}

void save_archive(const Archive& archive, const std::filesystem::path& path) {
  const std::string bytes = encode_archive(archive);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("failed to write " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("failed to move archive into place at " + path.string());
  }
}

Archive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_archive(ss.str());
}

void put_module(Archive& archive, const std::string& prefix, const torch::nn::Module& module) {
  for (const auto& p : module.named_parameters()) archive.put(prefix + p.key(), p.value());
  for (const auto& b : module.named_buffers()) archive.put(prefix + b.key(), b.value());
}

void get_module(const Archive& archive, const std::string& prefix, torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (auto& p : module.named_parameters()) {
    const Tensor v = archive.get(prefix + p.key());
    if (v.sizes() != p.value().sizes()) {
      throw IntegrityError("parameter " + prefix + p.key() + " has the wrong shape");
    }
    p.value().copy_(v.to(p.value().dtype()));
  }
  for (auto& b : module.named_buffers()) {
    const Tensor v = archive.get(prefix + b.key());
    if (v.sizes() != b.value().sizes()) {
      throw IntegrityError("buffer " + prefix + b.key() + " has the wrong shape");
    }
    b.value().copy_(v.to(b.value().dtype()));
  }
}

}  // namespace amtgan
