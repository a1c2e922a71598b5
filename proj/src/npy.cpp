#include "omcl/npy.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

namespace omcl {

namespace {

uint16_t rd_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | p[1] << 8); }
uint32_t rd_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

// Pulls the value of a python-dict-style header key, e.g. 'descr': '|u1'.
std::string header_field(const std::string& header, const std::string& key,
                         const std::string& origin) {
  const size_t kpos = header.find("'" + key + "'");
  if (kpos == std::string::npos)
    throw DataError(origin + ": npy header missing key '" + key + "'");
  size_t pos = header.find(':', kpos);
  if (pos == std::string::npos) throw DataError(origin + ": malformed npy header");
  ++pos;
  while (pos < header.size() && header[pos] == ' ') ++pos;
  size_t end;
  if (header[pos] == '\'') {
    end = header.find('\'', pos + 1);
    if (end == std::string::npos) throw DataError(origin + ": malformed npy header");
    return header.substr(pos + 1, end - pos - 1);
  }
  if (header[pos] == '(') {
    end = header.find(')', pos);
    if (end == std::string::npos) throw DataError(origin + ": malformed npy header");
    return header.substr(pos, end - pos + 1);
  }
  end = header.find_first_of(",}", pos);
  if (end == std::string::npos) throw DataError(origin + ": malformed npy header");
  return header.substr(pos, end - pos);
}

std::vector<int64_t> parse_shape_tuple(const std::string& tuple,
                                       const std::string& origin) {
  std::vector<int64_t> shape;
  std::string digits;
  for (char c : tuple) {
    if (c >= '0' && c <= '9') {
      digits += c;
    } else if (!digits.empty()) {
      shape.push_back(std::stoll(digits));
      digits.clear();
    }
  }
  if (!digits.empty()) shape.push_back(std::stoll(digits));
  for (int64_t d : shape)
    if (d < 0) throw DataError(origin + ": negative dimension in npy shape");
  return shape;
}

std::vector<uint8_t> inflate_raw(const uint8_t* src, size_t src_len, size_t dst_len,
                                 const std::string& origin) {
  std::vector<uint8_t> out(dst_len);
  z_stream zs{};
  if (inflateInit2(&zs, -15) != Z_OK)
    throw DataError(origin + ": zlib initialization failed");
  zs.next_in = const_cast<Bytef*>(src);
  zs.avail_in = static_cast<uInt>(src_len);
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(dst_len);
  const int rc = inflate(&zs, Z_FINISH);
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || zs.total_out != dst_len)
    throw DataError(origin + ": corrupt deflate stream in archive");
  return out;
}

struct ZipEntry {
  std::string name;
  uint16_t method;
  uint32_t crc;
  uint32_t comp_size;
  uint32_t uncomp_size;
  uint32_t local_offset;
};

std::vector<ZipEntry> zip_central_directory(const std::vector<uint8_t>& buf,
                                            const std::string& origin) {
  if (buf.size() < 22) throw DataError(origin + ": too small to be a zip archive");
  // locate end-of-central-directory record from the back
  size_t eocd = std::string::npos;
  const size_t scan_limit = buf.size() > (1 << 16) + 22 ? buf.size() - (1 << 16) - 22 : 0;
  for (size_t i = buf.size() - 22; ; --i) {
    if (rd_u32(buf.data() + i) == 0x06054b50) {
      eocd = i;
      break;
    }
    if (i == scan_limit) break;
  }
  if (eocd == std::string::npos)
    throw DataError(origin + ": zip end-of-central-directory not found");
  const uint16_t n_entries = rd_u16(buf.data() + eocd + 10);
  uint32_t offset = rd_u32(buf.data() + eocd + 16);

  std::vector<ZipEntry> entries;
  for (uint16_t e = 0; e < n_entries; ++e) {
    if (offset + 46 > buf.size()) throw DataError(origin + ": truncated zip directory");
    const uint8_t* p = buf.data() + offset;
    if (rd_u32(p) != 0x02014b50)
      throw DataError(origin + ": bad zip central directory signature");
    ZipEntry ent;
    ent.method = rd_u16(p + 10);
    ent.crc = rd_u32(p + 16);
    ent.comp_size = rd_u32(p + 20);
    ent.uncomp_size = rd_u32(p + 24);
    const uint16_t name_len = rd_u16(p + 28);
    const uint16_t extra_len = rd_u16(p + 30);
    const uint16_t comment_len = rd_u16(p + 32);
    ent.local_offset = rd_u32(p + 42);
    if (offset + 46u + name_len > buf.size())
      throw DataError(origin + ": truncated zip directory entry");
    ent.name.assign(reinterpret_cast<const char*>(p + 46), name_len);
    entries.push_back(std::move(ent));
    offset += 46u + name_len + extra_len + comment_len;
  }
  return entries;
}

std::vector<uint8_t> zip_extract(const std::vector<uint8_t>& buf, const ZipEntry& ent,
                                 const std::string& origin) {
  if (ent.local_offset + 30 > buf.size())
    throw DataError(origin + ": truncated zip member " + ent.name);
  const uint8_t* p = buf.data() + ent.local_offset;
  if (rd_u32(p) != 0x04034b50)
    throw DataError(origin + ": bad local header for zip member " + ent.name);
  const uint16_t name_len = rd_u16(p + 26);
  const uint16_t extra_len = rd_u16(p + 28);
  const size_t data_off = ent.local_offset + 30u + name_len + extra_len;
  if (data_off + ent.comp_size > buf.size())
    throw DataError(origin + ": truncated data for zip member " + ent.name);

  std::vector<uint8_t> data;
  if (ent.method == 0) {
    if (ent.comp_size != ent.uncomp_size)
      throw DataError(origin + ": stored zip member with mismatched sizes");
    data.assign(buf.begin() + static_cast<long>(data_off),
                buf.begin() + static_cast<long>(data_off + ent.comp_size));
  } else if (ent.method == 8) {
    data = inflate_raw(buf.data() + data_off, ent.comp_size, ent.uncomp_size, origin);
  } else {
    throw DataError(origin + ": unsupported zip compression method " +
                    std::to_string(ent.method) + " for member " + ent.name);
  }
  const uint32_t crc =
      static_cast<uint32_t>(crc32(0, data.data(), static_cast<uInt>(data.size())));
  if (crc != ent.crc)
    throw DataError(origin + ": CRC mismatch in zip member " + ent.name);
  return data;
}

}  // namespace

int64_t NpyArray::count() const {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::vector<int> NpyArray::as_int_vector() const {
  std::vector<int> out;
  out.reserve(static_cast<size_t>(count()));
  if (dtype == Dtype::u8)
    for (uint8_t v : u8) out.push_back(v);
  else
    for (int64_t v : i64) out.push_back(static_cast<int>(v));
  return out;
}

NpyArray parse_npy(const std::vector<uint8_t>& bytes, const std::string& origin) {
  static const uint8_t magic[6] = {0x93, 'N', 'U', 'M', 'P', 'Y'};
  if (bytes.size() < 10 || std::memcmp(bytes.data(), magic, 6) != 0)
    throw DataError(origin + ": not an npy file (bad magic)");
  const uint8_t ver_major = bytes[6], ver_minor = bytes[7];
  if (ver_major != 1 || ver_minor != 0)
    throw DataError(origin + ": unsupported npy version " + std::to_string(ver_major) +
                    "." + std::to_string(ver_minor));
  const uint16_t header_len = rd_u16(bytes.data() + 8);
  const size_t data_start = 10u + header_len;
  if (data_start > bytes.size()) throw DataError(origin + ": truncated npy header");
  const std::string header(reinterpret_cast<const char*>(bytes.data() + 10), header_len);

  const std::string order = header_field(header, "fortran_order", origin);
  if (order.find("True") != std::string::npos)
    throw DataError(origin + ": Fortran-ordered npy arrays are not supported");

  const std::string descr = header_field(header, "descr", origin);
  NpyArray arr;
  size_t item = 0;
  if (descr == "|u1" || descr == "uint8") {
    arr.dtype = NpyArray::Dtype::u8;
    item = 1;
  } else if (descr == "<i8" || descr == "int64") {
    arr.dtype = NpyArray::Dtype::i64;
    item = 8;
  } else {
    throw DataError(origin + ": unsupported npy dtype '" + descr +
                    "' (expected |u1 or <i8)");
  }

  arr.shape = parse_shape_tuple(header_field(header, "shape", origin), origin);
  const size_t expected = static_cast<size_t>(arr.count()) * item;
  if (bytes.size() - data_start < expected)
    throw DataError(origin + ": truncated npy data (need " + std::to_string(expected) +
                    " bytes, have " + std::to_string(bytes.size() - data_start) + ")");

  if (arr.dtype == NpyArray::Dtype::u8) {
    arr.u8.assign(bytes.begin() + static_cast<long>(data_start),
                  bytes.begin() + static_cast<long>(data_start + expected));
  } else {
    arr.i64.resize(static_cast<size_t>(arr.count()));
    std::memcpy(arr.i64.data(), bytes.data() + data_start, expected);
  }
  return arr;
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                              std::istreambuf_iterator<char>());
}

NpyArray load_npy(const std::string& path) { return parse_npy(read_file(path), path); }

void save_npy(const std::string& path, const NpyArray& array) {
  std::string dict = "{'descr': '";
  dict += array.dtype == NpyArray::Dtype::u8 ? "|u1" : "<i8";
  dict += "', 'fortran_order': False, 'shape': (";
  for (size_t i = 0; i < array.shape.size(); ++i) {
    dict += std::to_string(array.shape[i]);
    if (array.shape.size() == 1 || i + 1 < array.shape.size()) dict += ",";
    if (i + 1 < array.shape.size()) dict += " ";
  }
  dict += "), }";
  // pad with spaces so the data section starts on a 64-byte boundary
  const size_t total = 10 + dict.size() + 1;
  const size_t padded = (total + 63) / 64 * 64;
  dict.append(padded - total, ' ');
  dict += '\n';

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  const uint8_t magic[8] = {0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
  out.write(reinterpret_cast<const char*>(magic), 8);
  const uint16_t hlen = static_cast<uint16_t>(dict.size());
  const uint8_t hl[2] = {static_cast<uint8_t>(hlen & 0xff),
                         static_cast<uint8_t>(hlen >> 8)};
  out.write(reinterpret_cast<const char*>(hl), 2);
  out.write(dict.data(), static_cast<long>(dict.size()));
  if (array.dtype == NpyArray::Dtype::u8)
    out.write(reinterpret_cast<const char*>(array.u8.data()),
              static_cast<long>(array.u8.size()));
  else
    out.write(reinterpret_cast<const char*>(array.i64.data()),
              static_cast<long>(array.i64.size() * 8));
  if (!out) throw DataError("short write to " + path);
}

std::vector<std::string> npz_member_names(const std::string& path) {
  const auto buf = read_file(path);
  std::vector<std::string> names;
  for (const auto& e : zip_central_directory(buf, path)) names.push_back(e.name);
  return names;
}

bool npz_has_member(const std::string& path, const std::string& name) {
  for (const auto& n : npz_member_names(path))
    if (n == name || n == name + ".npy") return true;
  return false;
}

NpyArray load_npz_member(const std::string& path, const std::string& name) {
  const auto buf = read_file(path);
  for (const auto& e : zip_central_directory(buf, path)) {
    if (e.name == name || e.name == name + ".npy") {
      const auto bytes = zip_extract(buf, e, path);
      return parse_npy(bytes, path + ":" + e.name);
    }
  }
  throw DataError(path + ": archive has no member '" + name + "'");
}

}  // namespace omcl
