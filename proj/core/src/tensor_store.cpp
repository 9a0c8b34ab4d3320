#include "xvseg/tensor_store.hpp"

#include <bit>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "xvseg/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "tensor store assumes a little-endian host");

namespace fs = std::filesystem;

namespace xvseg {

void save_tensor_store(const std::string& dir, const std::vector<StoredTensor>& tensors) {
  fs::create_directories(dir);
  std::ofstream man(fs::path(dir) / "manifest.txt");
  std::ofstream bin(fs::path(dir) / "params.bin", std::ios::binary);
  if (!man || !bin) throw IoError("cannot write tensor store in " + dir);
  std::uint64_t offset = 0;
  for (const auto& st : tensors) {
    const auto count = static_cast<std::uint64_t>(st.t.size());
    man << st.name << " dtype=f64 rows=" << st.t.rows() << " cols=" << st.t.cols()
        << " h=" << st.t.h << " w=" << st.t.w << " offset=" << offset
        << " count=" << count << " trainable=" << (st.trainable ? 1 : 0)
        << " group=" << st.group << "\n";
    bin.write(reinterpret_cast<const char*>(st.t.m.data()),
              static_cast<std::streamsize>(count * sizeof(double)));
    offset += count * sizeof(double);
  }
  if (!man || !bin) throw IoError("short write in tensor store " + dir);
}

std::vector<StoredTensor> load_tensor_store(const std::string& dir) {
  std::ifstream man(fs::path(dir) / "manifest.txt");
  if (!man) throw IoError("cannot open " + dir + "/manifest.txt");
  std::ifstream bin(fs::path(dir) / "params.bin", std::ios::binary);
  if (!bin) throw IoError("cannot open " + dir + "/params.bin");
  std::vector<StoredTensor> out;
  std::string line;
  while (std::getline(man, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    StoredTensor st;
    ss >> st.name;
    std::string tok;
    std::int64_t rows = 0, cols = 0, h = 0, w = 0, offset = 0, count = 0;
    int trainable = 1;
    while (ss >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) throw FormatError("bad manifest token: " + tok);
      std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
      if (k == "rows") rows = std::stoll(v);
      else if (k == "cols") cols = std::stoll(v);
      else if (k == "h") h = std::stoll(v);
      else if (k == "w") w = std::stoll(v);
      else if (k == "offset") offset = std::stoll(v);
      else if (k == "count") count = std::stoll(v);
      else if (k == "trainable") trainable = std::stoi(v);
      else if (k == "group") st.group = v;
      else if (k == "dtype" && v != "f64") throw FormatError("unsupported dtype " + v);
    }
    if (rows * cols != count) throw FormatError("manifest count mismatch for " + st.name);
    st.trainable = trainable != 0;
    st.t = Tensor::matrix(static_cast<int>(rows), static_cast<int>(cols));
    st.t.h = static_cast<int>(h);
    st.t.w = static_cast<int>(w);
    bin.seekg(offset);
    bin.read(reinterpret_cast<char*>(st.t.m.data()),
             static_cast<std::streamsize>(count * sizeof(double)));
    if (!bin) throw FormatError("truncated params.bin reading " + st.name);
    out.push_back(std::move(st));
  }
  return out;
}

void save_params(const ParamStore& ps, const std::string& dir) {
  std::vector<StoredTensor> ts;
  ts.reserve(ps.all().size());
  for (const auto& p : ps.all())
    ts.push_back(StoredTensor{p->name, p->group, p->trainable, p->value});
  save_tensor_store(dir, ts);
}

void load_params(ParamStore& ps, const std::string& dir) {
  auto ts = load_tensor_store(dir);
  for (const auto& st : ts) {
    Param* p = ps.find(st.name);
    if (!p) throw FormatError("checkpoint has unknown parameter " + st.name);
    if (p->value.rows() != st.t.rows() || p->value.cols() != st.t.cols())
      throw ShapeError("checkpoint shape mismatch for " + st.name + ": " +
                       st.t.shape_str() + " vs " + p->value.shape_str());
    p->value.m = st.t.m;
  }
}

void write_kv_file(const std::string& path, const std::map<std::string, std::string>& kv) {
  fs::path tmp = fs::path(path).concat(".tmp");
  {
    std::ofstream f(tmp);
    if (!f) throw IoError("cannot write " + path);
    for (const auto& [k, v] : kv) f << k << " = " << v << "\n";
    if (!f) throw IoError("short write " + path);
  }
  fs::rename(tmp, path);
}

std::map<std::string, std::string> read_kv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("bad key=value line: " + line);
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

}  // namespace xvseg
