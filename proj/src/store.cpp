#include "scap/store.hpp"

#include "scap/codec.hpp"
#include "scap/error.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <iterator>

namespace scap {

namespace {

std::string errno_text() { return std::strerror(errno); }

class FileDescriptor {
public:
  explicit FileDescriptor(int fd) : fd_(fd) {}
  ~FileDescriptor()
  {
    if (fd_ >= 0) {
      ::close(fd_);
    }
  }
  FileDescriptor(const FileDescriptor&) = delete;
  FileDescriptor& operator=(const FileDescriptor&) = delete;
  int get() const noexcept { return fd_; }
  int release() noexcept { return std::exchange(fd_, -1); }

private:
  int fd_;
};

} // namespace

StoreKey make_store_key(const CryptoAddress& address, const ServiceId& service)
{
  return {address.local, address.domain_ascii, service.token()};
}

void MappingStore::insert(MappingRecord record)
{
  if (record.target_data.size() > kMaxTargetData) {
    fail(Errc::MalformedStoreFile, "target data for " + escape_for_display(record.address) + " exceeds 65536 bytes");
  }
  auto key = make_store_key(parse_address(record.address), record.service);
  if (records_.contains(key)) {
    fail(Errc::DuplicateKey, escape_for_display(record.address) + " / " + record.service.token());
  }
  records_.emplace(std::move(key), std::move(record));
}

const MappingRecord* MappingStore::find(const CryptoAddress& address, const ServiceId& service) const
{
  auto it = records_.find(make_store_key(address, service));
  return it == records_.end() ? nullptr : &it->second;
}

const MappingRecord* MappingStore::find(std::string_view address, const ServiceId& service) const
{
  return find(parse_address(address), service);
}

MappingStore store_parse(ByteView contents)
{
  MappingStore store;
  std::size_t offset = 0;
  std::size_t index = 0;
  while (offset < contents.size()) {
    try {
      auto record = netstring_decode(contents.subspan(offset));
      auto fields = record.payload;
      auto address = netstring_decode(fields);
      auto service = netstring_decode(fields.subspan(address.consumed));
      auto target = netstring_decode(fields.subspan(address.consumed + service.consumed));
      if (address.consumed + service.consumed + target.consumed != fields.size()) {
        fail(Errc::MalformedStoreFile, "record has more than three fields");
      }
      store.insert({to_string(address.payload), ServiceId::from_token(as_text(service.payload)),
                    Bytes(target.payload.begin(), target.payload.end())});
      offset += record.consumed;
    } catch (const Error& e) {
      if (e.code() == Errc::DuplicateKey || e.code() == Errc::MalformedStoreFile) {
        throw Error(e.code(), "record " + std::to_string(index) + ": " + e.what());
      }
      fail(Errc::MalformedStoreFile, "record " + std::to_string(index) + " at byte " + std::to_string(offset) + ": " +
                                       e.what());
    }
    ++index;
  }
  return store;
}

Bytes store_serialize(const MappingStore& store)
{
  Bytes out;
  for (const auto& [key, record] : store.records()) {
    Bytes fields;
    append(fields, netstring_encode(record.address));
    append(fields, netstring_encode(record.service.token()));
    append(fields, netstring_encode(record.target_data));
    append(out, netstring_encode(fields));
  }
  return out;
}

MappingStore store_load(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail(Errc::IoError, "cannot open store file " + path.string());
  }
  Bytes contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) {
    fail(Errc::IoError, "cannot read store file " + path.string());
  }
  auto store = store_parse(contents);
  store.source_path = path;
  return store;
}

void store_save(const MappingStore& store, const std::filesystem::path& path)
{
  auto bytes = store_serialize(store);
  auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  auto pattern = (dir / ("." + path.filename().string() + ".XXXXXX")).string();
  FileDescriptor fd(::mkstemp(pattern.data()));
  if (fd.get() < 0) {
    fail(Errc::IoError, "cannot create temporary file in " + dir.string() + ": " + errno_text());
  }
  std::size_t written = 0;
  while (written < bytes.size()) {
    auto n = ::write(fd.get(), bytes.data() + written, bytes.size() - written);
    if (n < 0) {
      if (errno == EINTR) {
        continue;
      }
      auto text = errno_text();
      ::unlink(pattern.c_str());
      fail(Errc::IoError, "write " + pattern + ": " + text);
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd.get()) != 0 || ::close(fd.release()) != 0) {
    auto text = errno_text();
    ::unlink(pattern.c_str());
    fail(Errc::IoError, "sync " + pattern + ": " + text);
  }
  if (::rename(pattern.c_str(), path.c_str()) != 0) {
    auto text = errno_text();
    ::unlink(pattern.c_str());
    fail(Errc::IoError, "rename onto " + path.string() + ": " + text);
  }
  FileDescriptor dirfd(::open(dir.c_str(), O_RDONLY | O_DIRECTORY));
  if (dirfd.get() >= 0) {
    ::fsync(dirfd.get());
  }
}

} // namespace scap
