#include "xvseg/dataset.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "xvseg/errors.hpp"
#include "xvseg/mask_io.hpp"

namespace fs = std::filesystem;

namespace xvseg {

std::vector<const DatasetEntry*> DatasetManifest::split_entries(const std::string& split) const {
  std::vector<const DatasetEntry*> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(&e);
  return out;
}

namespace {
std::string id6(std::uint64_t id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06" PRIu64, id);
  return buf;
}
}  // namespace

DatasetManifest export_dataset(int n, const std::string& dir, double train_ratio,
                               Difficulty difficulty, int canvas, std::uint64_t seed) {
  if (n < 1) throw ValueError("export_dataset: n must be >= 1");
  if (train_ratio < 0.0 || train_ratio > 1.0)
    throw ValueError("export_dataset: train_ratio must lie in [0,1]");
  DatasetManifest man;
  man.canvas = canvas;
  man.seed = seed;
  const int n_train = static_cast<int>(n * train_ratio);
  for (const char* split : {"train", "val"}) {
    fs::create_directories(fs::path(dir) / "images" / split);
    fs::create_directories(fs::path(dir) / "masks" / split);
  }
  std::ostringstream lines;
  lines.precision(17);
  for (int i = 0; i < n; ++i) {
    SynthPair pair = generate_pair(seed, static_cast<std::uint64_t>(i), difficulty, canvas);
    DatasetEntry e;
    e.id = static_cast<std::uint64_t>(i);
    e.split = i < n_train ? "train" : "val";
    e.difficulty = difficulty;
    e.query_index = pair.scene.query_index;
    e.transform = pair.transform;
    std::string base = id6(e.id);
    e.img_s = (fs::path(dir) / "images" / e.split / (base + "_s.png")).string();
    e.img_t = (fs::path(dir) / "images" / e.split / (base + "_t.png")).string();
    e.mask_s = (fs::path(dir) / "masks" / e.split / (base + "_s.png")).string();
    e.mask_t = (fs::path(dir) / "masks" / e.split / (base + "_t.png")).string();
    write_image(pair.i_s, e.img_s);
    write_image(pair.i_t, e.img_t);
    write_mask(pair.m_s, e.mask_s);
    write_mask(pair.m_t, e.mask_t);
    lines << "id=" << base << " split=" << e.split
          << " difficulty=" << to_string(e.difficulty) << " query=" << e.query_index
          << " a11=" << e.transform.a11 << " a12=" << e.transform.a12
          << " a21=" << e.transform.a21 << " a22=" << e.transform.a22
          << " tx=" << e.transform.tx << " ty=" << e.transform.ty << "\n";
    man.entries.push_back(std::move(e));
  }
  std::ofstream f(fs::path(dir) / "manifest.txt");
  if (!f) throw IoError("cannot write dataset manifest in " + dir);
  f << "canvas = " << canvas << "\n";
  f << "seed = " << seed << "\n";
  f << "n = " << n << "\n";
  f << lines.str();
  return man;
}

DatasetManifest load_dataset(const std::string& dir) {
  std::ifstream f(fs::path(dir) / "manifest.txt");
  if (!f) throw IoError("cannot open dataset manifest in " + dir);
  DatasetManifest man;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (line.find("id=") != 0) {
      std::istringstream hs(line);
      std::string k, eq, v;
      hs >> k >> eq >> v;
      if (k == "canvas") man.canvas = std::stoi(v);
      else if (k == "seed") man.seed = std::stoull(v);
      continue;
    }
    DatasetEntry e;
    std::istringstream ss(line);
    std::string tok, idstr;
    while (ss >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) throw FormatError("bad manifest token: " + tok);
      std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
      if (k == "id") idstr = v;
      else if (k == "split") e.split = v;
      else if (k == "difficulty") e.difficulty = parse_difficulty(v);
      else if (k == "query") e.query_index = std::stoi(v);
      else if (k == "a11") e.transform.a11 = std::stod(v);
      else if (k == "a12") e.transform.a12 = std::stod(v);
      else if (k == "a21") e.transform.a21 = std::stod(v);
      else if (k == "a22") e.transform.a22 = std::stod(v);
      else if (k == "tx") e.transform.tx = std::stod(v);
      else if (k == "ty") e.transform.ty = std::stod(v);
    }
    e.id = std::stoull(idstr);
    e.img_s = (fs::path(dir) / "images" / e.split / (idstr + "_s.png")).string();
    e.img_t = (fs::path(dir) / "images" / e.split / (idstr + "_t.png")).string();
    e.mask_s = (fs::path(dir) / "masks" / e.split / (idstr + "_s.png")).string();
    e.mask_t = (fs::path(dir) / "masks" / e.split / (idstr + "_t.png")).string();
    man.entries.push_back(std::move(e));
  }
  return man;
}

LoadedPair load_pair(const DatasetEntry& e) {
  LoadedPair p;
  p.i_s = read_image(e.img_s);
  p.i_t = read_image(e.img_t);
  p.m_s = read_mask(e.mask_s);
  p.m_t = read_mask(e.mask_t);
  return p;
}

}  // namespace xvseg
