#include "awac/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <json.hpp>

#include "awac/error.hpp"

namespace awac {

namespace {

constexpr std::array<char, 8> kMagic = {'A', 'W', 'A', 'C', 'P', 'O', 'L', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

std::uint64_t fnv1a(const char* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void put(std::string& buf, const T& value) {
  char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  buf.append(raw, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& buf) : buf_(buf) {}

  template <typename T>
  T get() {
    T value;
    need(sizeof(T));
    std::memcpy(&value, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void doubles(double* out, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(out, buf_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }

  std::size_t position() const noexcept { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw IoError("checkpoint is truncated");
  }

  const std::string& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_policy(const PolicyParams& policy, const std::filesystem::path& path) {
  const nlohmann::json header = {
      {"format", "awac-policy"},
      {"version", kCheckpointVersion},
      {"observation_size", policy.observation_size()},
      {"action_count", policy.action_count()},
      {"hidden_sizes", policy.hidden_sizes()},
      {"actor_params", policy.actor.num_params()},
      {"critic_params", policy.critic.num_params()},
  };
  const std::string header_text = header.dump();

  std::string body;
  put(body, kCheckpointVersion);
  put(body, static_cast<std::uint64_t>(header_text.size()));
  body += header_text;
  body.append(reinterpret_cast<const char*>(policy.actor.params().data()),
              policy.actor.num_params() * sizeof(double));
  body.append(reinterpret_cast<const char*>(policy.critic.params().data()),
              policy.critic.num_params() * sizeof(double));
  const std::uint64_t checksum = fnv1a(body.data(), body.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(kMagic.data(), kMagic.size());
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  out.write(reinterpret_cast<const char*>(&checksum), sizeof checksum);
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

PolicyParams load_policy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < kMagic.size() || std::memcmp(buf.data(), kMagic.data(), kMagic.size()) != 0) {
    throw IoError("not an awac policy checkpoint: " + path.string());
  }
  if (buf.size() < kMagic.size() + sizeof(std::uint64_t)) throw IoError("checkpoint is truncated");
  const std::string body = buf.substr(kMagic.size(), buf.size() - kMagic.size() - sizeof(std::uint64_t));
  Reader r(body);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = r.get<std::uint64_t>();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.bytes(static_cast<std::size_t>(header_len)));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt checkpoint header: ") + e.what());
  }

  PolicyParams policy;
  try {
    policy = PolicyParams(header.at("observation_size").get<int>(),
                          header.at("action_count").get<int>(),
                          header.at("hidden_sizes").get<std::vector<int>>());
    if (header.at("actor_params").get<std::size_t>() != policy.actor.num_params() ||
        header.at("critic_params").get<std::size_t>() != policy.critic.num_params()) {
      throw IoError("checkpoint parameter counts disagree with its shapes");
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw IoError(std::string("corrupt checkpoint header: ") + e.what());
  }
  r.doubles(policy.actor.params().data(), policy.actor.num_params());
  r.doubles(policy.critic.params().data(), policy.critic.num_params());
  if (r.position() != body.size()) throw IoError("checkpoint has trailing bytes");

  std::uint64_t stored = 0;
  std::memcpy(&stored, buf.data() + buf.size() - sizeof stored, sizeof stored);
  if (stored != fnv1a(body.data(), body.size())) throw IoError("checkpoint checksum mismatch");
  return policy;
}

void check_policy_shape(const PolicyParams& policy, const EnvConfig& config) {
  const int obs = 3 * config.n_operators;
  const int actions = static_cast<int>(feasible_actions(config).size());
  if (policy.observation_size() != obs || policy.action_count() != actions) {
    throw ConfigError("policy shape (" + std::to_string(policy.observation_size()) + " -> " +
                      std::to_string(policy.action_count()) + ") does not match environment (" +
                      std::to_string(obs) + " -> " + std::to_string(actions) + ")");
  }
}

PolicyParams load_policy(const std::filesystem::path& path, const EnvConfig& config) {
  PolicyParams policy = load_policy(path);
  check_policy_shape(policy, config);
  return policy;
}

}  // namespace awac
