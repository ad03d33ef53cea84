#include "hypergrad/problems.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace hypergrad {

LibsvmParseError::LibsvmParseError(std::size_t line, const std::string& what)
    : std::runtime_error("libsvm line " + std::to_string(line) + ": " + what), line_(line), detail_(what) {}

Vector SparseDataset::multiply(const Vector& w) const {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double acc = 0.0;
    for (const auto& e : rows[i]) acc += e.value * w[e.index - 1];
    out[static_cast<Index>(i)] = acc;
  }
  return out;
}

void SparseDataset::add_transpose_multiply(const Vector& u, Vector& out) const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double ui = u[static_cast<Index>(i)];
    if (ui == 0.0) continue;
    for (const auto& e : rows[i]) out[e.index - 1] += ui * e.value;
  }
}

namespace {

std::string inflate_gzip(const std::string& bytes) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw std::runtime_error("zlib init failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(bytes.data()));
  zs.avail_in = static_cast<uInt>(bytes.size());
  std::string out;
  char buffer[1 << 15];
  int status = Z_OK;
  while (status != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef*>(buffer);
    zs.avail_out = sizeof(buffer);
    status = inflate(&zs, Z_NO_FLUSH);
    if (status != Z_OK && status != Z_STREAM_END) {
      inflateEnd(&zs);
      throw std::runtime_error("corrupt gzip stream");
    }
    out.append(buffer, sizeof(buffer) - zs.avail_out);
    if (status == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw std::runtime_error("truncated gzip stream");
    }
  }
  inflateEnd(&zs);
  return out;
}

bool parse_double(std::string_view token, double& out) {
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  if (token.empty()) return false;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_index(std::string_view token, std::int64_t& out) {
  if (token.empty()) return false;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

SparseDataset load_libsvm(const std::string& raw) {
  const bool gz = raw.size() >= 2 && static_cast<unsigned char>(raw[0]) == 0x1F &&
                  static_cast<unsigned char>(raw[1]) == 0x8B;
  const std::string text = gz ? inflate_gzip(raw) : raw;

  SparseDataset data;
  std::vector<double> raw_labels;
  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream tokens(line);
    std::string token;
    if (!(tokens >> token)) continue;

    double label = 0.0;
    if (!parse_double(token, label)) throw LibsvmParseError(line_no, "bad label '" + token + "'");

    std::vector<SparseEntry> row;
    while (tokens >> token) {
      const auto colon = token.find(':');
      if (colon == std::string::npos) throw LibsvmParseError(line_no, "expected idx:val, got '" + token + "'");
      std::string_view sv(token);
      SparseEntry e{};
      if (!parse_index(sv.substr(0, colon), e.index))
        throw LibsvmParseError(line_no, "bad index in '" + token + "'");
      if (e.index < 1) throw LibsvmParseError(line_no, "index < 1 in '" + token + "'");
      if (!parse_double(sv.substr(colon + 1), e.value))
        throw LibsvmParseError(line_no, "bad value in '" + token + "'");
      if (!row.empty() && e.index <= row.back().index)
        throw LibsvmParseError(line_no, "indices not strictly increasing at '" + token + "'");
      data.n_features = std::max<std::size_t>(data.n_features, static_cast<std::size_t>(e.index));
      row.push_back(e);
    }
    raw_labels.push_back(label);
    data.rows.push_back(std::move(row));
  }

  const std::set<double> distinct(raw_labels.begin(), raw_labels.end());
  if (distinct.size() > 2)
    throw LibsvmParseError(line_no, "more than two distinct labels; only binary data is supported");
  data.labels.reserve(raw_labels.size());
  for (double y : raw_labels) {
    if (distinct.size() == 2)
      data.labels.push_back(y == *distinct.begin() ? -1.0 : 1.0);
    else
      data.labels.push_back(y > 0.0 ? 1.0 : -1.0);
  }
  return data;
}

SparseDataset load_libsvm(std::istream& in) {
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_libsvm(bytes);
}

SparseDataset load_libsvm_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  try {
    return load_libsvm(in);
  } catch (const LibsvmParseError& e) {
    throw LibsvmParseError(e.line(), path.string() + ": " + e.detail());
  }
}

}  // namespace hypergrad
