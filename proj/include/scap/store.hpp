#pragma once

#include "scap/bytes.hpp"
#include "scap/identity.hpp"

#include <compare>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace scap {

inline constexpr std::size_t kMaxTargetData = 65'536;

struct MappingRecord {
  std::string address; // full cryptoaddress as provisioned
  ServiceId service;
  Bytes target_data;
  friend bool operator==(const MappingRecord&, const MappingRecord&) = default;
};

/// (local part, ASCII domain, service). Local parts match byte-for-byte,
/// domains after IDNA conversion and lowercasing.
struct StoreKey {
  std::string local;
  std::string domain_ascii;
  std::string service;
  friend auto operator<=>(const StoreKey&, const StoreKey&) = default;
};

StoreKey make_store_key(const CryptoAddress& address, const ServiceId& service);

class MappingStore {
public:
  /// Validates the record and throws DuplicateKey when its key is taken.
  void insert(MappingRecord record);

  /// Throws the parse_address errors for an invalid address.
  const MappingRecord* find(std::string_view address, const ServiceId& service) const;
  const MappingRecord* find(const CryptoAddress& address, const ServiceId& service) const;

  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const std::map<StoreKey, MappingRecord>& records() const noexcept { return records_; }

  std::filesystem::path source_path;

  friend bool operator==(const MappingStore& a, const MappingStore& b) { return a.records_ == b.records_; }

private:
  std::map<StoreKey, MappingRecord> records_;
};

/// Store file: catenated record netstrings, each holding three nested
/// netstrings (address, service identifier, target data). Throws
/// MalformedStoreFile or DuplicateKey.
MappingStore store_parse(ByteView contents);
Bytes store_serialize(const MappingStore& store);

/// Throws IoError, MalformedStoreFile or DuplicateKey.
MappingStore store_load(const std::filesystem::path& path);

/// Writes a temporary file next to `path`, syncs it and renames it over
/// `path`, so an interrupted save leaves the old file intact.
void store_save(const MappingStore& store, const std::filesystem::path& path);

/// Read-mostly handle shared by all sessions; reload swaps the whole store.
class SharedStore {
public:
  SharedStore() = default;
  explicit SharedStore(MappingStore store) : current_(std::make_shared<const MappingStore>(std::move(store))) {}

  std::shared_ptr<const MappingStore> snapshot() const
  {
    std::lock_guard lock(mutex_);
    return current_;
  }

  void replace(MappingStore store)
  {
    auto next = std::make_shared<const MappingStore>(std::move(store));
    std::lock_guard lock(mutex_);
    current_ = std::move(next);
  }

  void clear()
  {
    std::lock_guard lock(mutex_);
    current_.reset();
  }

private:
  mutable std::mutex mutex_;
  std::shared_ptr<const MappingStore> current_;
};

} // namespace scap
