#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <regex>
#include <sstream>

#include "crownflow/io.hpp"

namespace crownflow::io {

static_assert(std::endian::native == std::endian::little,
              "NPY payloads are read and written in host order");

namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;
constexpr std::size_t kPreambleLen = 10;  // magic + version + u16 header length

std::size_t item_size(DType d) {
  switch (d) {
    case DType::kFloat32: return 4;
    case DType::kUInt16: return 2;
    case DType::kUInt8: return 1;
  }
  return 0;
}

const char* descr_of(DType d) {
  switch (d) {
    case DType::kFloat32: return "<f4";
    case DType::kUInt16: return "<u2";
    case DType::kUInt8: return "|u1";
  }
  return "";
}

DType parse_descr(const std::string& descr) {
  if (descr == "<f4") return DType::kFloat32;
  if (descr == "<u2") return DType::kUInt16;
  if (descr == "|u1" || descr == "<u1") return DType::kUInt8;
  throw Error("npy.dtype", "unsupported NPY dtype '" + descr + "'");
}

std::string shape_repr(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) s += ", ";
    s += std::to_string(shape[i]);
  }
  if (shape.size() == 1) s += ",";
  return s + ")";
}

NpyHeader parse_header(const std::string& text) {
  static const std::regex descr_re(R"('descr'\s*:\s*'([^']*)')");
  static const std::regex order_re(R"('fortran_order'\s*:\s*(True|False))");
  static const std::regex shape_re(R"('shape'\s*:\s*\(([^)]*)\))");
  std::smatch m;
  NpyHeader h;
  if (!std::regex_search(text, m, descr_re)) throw Error("npy.header", "NPY header lacks 'descr'");
  h.dtype = parse_descr(m[1].str());
  if (!std::regex_search(text, m, order_re)) {
    throw Error("npy.header", "NPY header lacks 'fortran_order'");
  }
  h.fortran_order = m[1].str() == "True";
  if (!std::regex_search(text, m, shape_re)) throw Error("npy.header", "NPY header lacks 'shape'");
  std::stringstream dims(m[1].str());
  std::string item;
  while (std::getline(dims, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    try {
      h.shape.push_back(static_cast<std::size_t>(std::stoull(item.substr(first))));
    } catch (const std::exception&) {
      throw Error("npy.header", "bad NPY shape entry '" + item + "'");
    }
  }
  return h;
}

template <typename T>
std::vector<T> unpack(const std::string& bytes, std::size_t offset, std::size_t count) {
  std::vector<T> out(count);
  if (count > 0) std::memcpy(out.data(), bytes.data() + offset, count * sizeof(T));
  return out;
}

}  // namespace

std::size_t NpyHeader::element_count() const {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string encode_npy_header(const NpyHeader& header) {
  std::string dict = std::string("{'descr': '") + descr_of(header.dtype) +
                     "', 'fortran_order': " + (header.fortran_order ? "True" : "False") +
                     ", 'shape': " + shape_repr(header.shape) + ", }";
  // Pad with spaces and a closing newline so the preamble plus header is a
  // multiple of 64 bytes.
  const std::size_t unpadded = kPreambleLen + dict.size() + 1;
  const std::size_t padded = (unpadded + 63) / 64 * 64;
  dict.append(padded - unpadded, ' ');
  dict.push_back('\n');
  const auto len = static_cast<std::uint16_t>(dict.size());
  std::string out(kMagic, kMagicLen);
  out.push_back('\x01');
  out.push_back('\x00');
  out.push_back(static_cast<char>(len & 0xFF));
  out.push_back(static_cast<char>(len >> 8));
  return out + dict;
}

NpyArray read_npy(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("npy.io", "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < kPreambleLen || bytes.compare(0, kMagicLen, kMagic, kMagicLen) != 0) {
    throw Error("npy.magic", path.string() + " is not an NPY file");
  }
  if (bytes[6] != 1 || bytes[7] != 0) {
    throw Error("npy.version", "unsupported NPY version " + std::to_string(bytes[6]) + "." +
                                   std::to_string(bytes[7]) + " (only 1.0)");
  }
  const std::size_t header_len = static_cast<unsigned char>(bytes[8]) |
                                 (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
  if (bytes.size() < kPreambleLen + header_len) throw Error("npy.header", "truncated NPY header");

  NpyArray arr;
  arr.header = parse_header(bytes.substr(kPreambleLen, header_len));
  if (arr.header.fortran_order) {
    throw Error("npy.fortran_order", "Fortran-ordered NPY arrays are not supported");
  }
  const std::size_t offset = kPreambleLen + header_len;
  const std::size_t count = arr.header.element_count();
  if (bytes.size() - offset != count * item_size(arr.header.dtype)) {
    throw Error("npy.size", "NPY payload size does not match its shape");
  }
  switch (arr.header.dtype) {
    case DType::kFloat32: arr.data = unpack<float>(bytes, offset, count); break;
    case DType::kUInt16: arr.data = unpack<std::uint16_t>(bytes, offset, count); break;
    case DType::kUInt8: arr.data = unpack<std::uint8_t>(bytes, offset, count); break;
  }
  return arr;
}

void write_npy(const fs::path& path, const NpyArray& array) {
  if (array.header.fortran_order) {
    throw Error("npy.fortran_order", "Fortran-ordered NPY arrays are not supported");
  }
  const std::size_t count = array.header.element_count();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("npy.io", "cannot write " + path.string());
  std::visit(
      [&](const auto& values) {
        using T = typename std::decay_t<decltype(values)>::value_type;
        if (values.size() != count || item_size(array.header.dtype) != sizeof(T)) {
          throw Error("npy.size", "NPY payload does not match its header");
        }
        const std::string header = encode_npy_header(array.header);
        out.write(header.data(), static_cast<std::streamsize>(header.size()));
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * sizeof(T)));
      },
      array.data);
  if (!out) throw Error("npy.io", "failed writing " + path.string());
}

void write_flows_npy(const fs::path& path, const FlowField& flow) {
  const auto h = static_cast<std::size_t>(flow.rows());
  const auto w = static_cast<std::size_t>(flow.cols());
  std::vector<float> values(2 * h * w);
  std::copy_n(flow.dy.data(), h * w, values.begin());
  std::copy_n(flow.dx.data(), h * w, values.begin() + static_cast<std::ptrdiff_t>(h * w));
  write_npy(path, {{DType::kFloat32, false, {2, h, w}}, std::move(values)});
}

FlowField read_flows_npy(const fs::path& path) {
  const NpyArray arr = read_npy(path);
  const auto& shape = arr.header.shape;
  if (arr.header.dtype != DType::kFloat32) throw Error("npy.dtype", "flows must be float32");
  if (shape.size() != 3 || shape[0] != 2 || shape[1] == 0 || shape[2] == 0) {
    throw Error("npy.shape", "flows must have shape [2, H, W]");
  }
  const auto h = static_cast<Index>(shape[1]);
  const auto w = static_cast<Index>(shape[2]);
  const auto& values = std::get<std::vector<float>>(arr.data);
  FlowField flow(h, w);
  std::copy_n(values.begin(), h * w, flow.dy.data());
  std::copy_n(values.begin() + h * w, h * w, flow.dx.data());
  return flow;
}

void write_prob_npy(const fs::path& path, const ProbabilityMap& prob) {
  const auto h = static_cast<std::size_t>(prob.rows());
  const auto w = static_cast<std::size_t>(prob.cols());
  write_npy(path, {{DType::kFloat32, false, {h, w}},
                   std::vector<float>(prob.data(), prob.data() + prob.size())});
}

ProbabilityMap read_prob_npy(const fs::path& path) {
  const NpyArray arr = read_npy(path);
  const auto& shape = arr.header.shape;
  if (arr.header.dtype != DType::kFloat32) throw Error("npy.dtype", "probabilities must be float32");
  if (shape.size() != 2 || shape[0] == 0 || shape[1] == 0) {
    throw Error("npy.shape", "probabilities must have shape [H, W]");
  }
  const auto& values = std::get<std::vector<float>>(arr.data);
  ProbabilityMap prob(static_cast<Index>(shape[0]), static_cast<Index>(shape[1]));
  std::copy(values.begin(), values.end(), prob.data());
  return prob;
}

}  // namespace crownflow::io
