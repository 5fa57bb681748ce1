#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "uavcov/errors.hpp"
#include "uavcov/harness.hpp"
#include "uavcov/seeding.hpp"

namespace uavcov::harness {

static_assert(std::endian::native == std::endian::little, "checkpoint records assume a little-endian host");

namespace {

constexpr const char* kMagic = "uavcov-checkpoint";

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated checkpoint " + path.string());
  return v;
}

std::string expect_line(std::istream& in, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("truncated checkpoint header in " + path.string());
  return line;
}

std::uint64_t header_count(const std::string& line, const std::string& tag, const std::filesystem::path& path) {
  std::istringstream ss(line);
  std::string word;
  std::uint64_t n = 0;
  if (!(ss >> word >> n) || word != tag) throw IoError("malformed checkpoint header '" + line + "' in " + path.string());
  return n;
}

}  // namespace

ppo::Policy make_policy(const RunConfig& config) {
  return ppo::Policy(config.arch, config.net, config.env.n_uavs, config.env.obs_dim(),
                     derive_seed(config.seed, {0x706f6c696379ULL}));
}

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const ppo::Policy& policy) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    const std::string text = to_text(config);
    const auto params = policy.all_params();
    out << kMagic << ' ' << kCheckpointVersion << '\n';
    out << "config " << text.size() << '\n' << text;
    out << "params " << params.size() << '\n';
    for (const auto* p : params) {
      write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
      out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
      write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p->shape.size()));
      for (auto d : p->shape) write_pod<std::uint64_t>(out, d);
      out.write(reinterpret_cast<const char*>(p->value.data()),
                static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  {
    std::istringstream magic(expect_line(in, path));
    std::string word;
    int version = 0;
    if (!(magic >> word >> version) || word != kMagic) throw IoError(path.string() + " is not a checkpoint");
    if (version != kCheckpointVersion)
      throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
  }
  const std::uint64_t text_len = header_count(expect_line(in, path), "config", path);
  std::string text(text_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(text_len))) throw IoError("truncated checkpoint config");
  RunConfig config = config_from_text(text);
  const std::uint64_t count = header_count(expect_line(in, path), "params", path);

  ppo::Policy policy = make_policy(config);
  auto params = policy.all_params();
  if (count != params.size())
    throw ShapeMismatch("checkpoint holds " + std::to_string(count) + " tensors, architecture expects " +
                        std::to_string(params.size()));
  for (auto* p : params) {
    const auto name_len = read_pod<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw IoError("truncated checkpoint " + path.string());
    const auto rank = read_pod<std::uint32_t>(in, path);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(read_pod<std::uint64_t>(in, path));
    if (name != p->name || shape != p->shape)
      throw ShapeMismatch("checkpoint tensor '" + name + "' does not match expected '" + p->name + "'");
    if (!in.read(reinterpret_cast<char*>(p->value.data()),
                 static_cast<std::streamsize>(p->value.size() * sizeof(double))))
      throw IoError("truncated checkpoint " + path.string());
  }
  return Checkpoint{std::move(config), std::move(policy)};
}

}  // namespace uavcov::harness
