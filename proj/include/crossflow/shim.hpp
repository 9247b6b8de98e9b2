#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "crossflow/ir.hpp"

// The uniform abstraction over datastores and FaaS platforms. The runtime
// speaks only this interface; the simulated backend (and any future real
// adapter) implements it. Every operation is an atomic unit against the
// backing store.
namespace crossflow::shim {

using Bytes = std::string;

struct DsSpec {
    std::string platform_id;
    ir::DsKind kind = ir::DsKind::Table;
    std::string credentials;  // opaque; validated for presence only

    bool operator==(const DsSpec&) const = default;
};

struct FaaSSpec {
    std::string platform_id;
    std::string credentials;
};

struct AcceptToken {
    std::string request_id;
    std::string platform_id;
};

class ShimError : public std::runtime_error {
  public:
    ShimError(std::string code, const std::string& what)
        : std::runtime_error(code + ": " + what), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

  private:
    std::string code_;
};

class PlatformUnavailable : public ShimError {
  public:
    explicit PlatformUnavailable(const std::string& platform)
        : ShimError("PlatformUnavailable", platform) {}
};

class PayloadTooLarge : public ShimError {
  public:
    PayloadTooLarge(std::size_t size, std::int64_t limit)
        : ShimError("PayloadTooLarge",
                    std::to_string(size) + " > limit " + std::to_string(limit)) {}
};

class UnknownFunction : public ShimError {
  public:
    explicit UnknownFunction(const std::string& name) : ShimError("UnknownFunction", name) {}
};

class ValueTooLarge : public ShimError {
  public:
    explicit ValueTooLarge(const std::string& key) : ShimError("ValueTooLarge", key) {}
};

class MissingList : public ShimError {
  public:
    explicit MissingList(const std::string& key) : ShimError("MissingList", key) {}
};

class MissingBitmap : public ShimError {
  public:
    explicit MissingBitmap(const std::string& key) : ShimError("MissingBitmap", key) {}
};

class IndexOutOfRange : public ShimError {
  public:
    explicit IndexOutOfRange(const std::string& key) : ShimError("IndexOutOfRange", key) {}
};

struct BitmapSnapshot {
    std::vector<bool> bits;
    bool flipped = false;  // whether this update transitioned the bit

    bool all_true() const {
        for (bool b : bits)
            if (!b) return false;
        return !bits.empty();
    }
};

// One datastore on one platform. Lists and bitmaps live beside plain items;
// get_value reads any of them (lists and bitmaps come back as their JSON
// rendering).
class DataStore {
  public:
    virtual ~DataStore() = default;

    // Conditional create; returns true iff this call created the item.
    // The stored value is immutable afterwards.
    virtual bool store_output_data(const std::string& key, const Bytes& data) = 0;
    virtual std::optional<Bytes> get_value(const std::string& key) = 0;
    virtual bool create_invocation_list(const std::string& key) = 0;
    // Atomic append of all names followed by a snapshot of the full list.
    virtual std::vector<std::string> append_and_get_list(
        const std::string& key, const std::vector<std::string>& names) = 0;
    virtual bool create_bitmap(int size, const std::string& key) = 0;
    // Atomically sets the bit and returns the post-update snapshot.
    // Idempotent per index.
    virtual BitmapSnapshot update_bitmap(int index, const std::string& key) = 0;

    // Prefix scan and deletion, used by garbage collection.
    virtual std::vector<std::string> keys_with_prefix(const std::string& prefix) = 0;
    virtual bool remove(const std::string& key) = 0;

    virtual std::int64_t item_size_limit() const = 0;
    virtual const DsSpec& spec() const = 0;
};

class FaasClient {
  public:
    virtual ~FaasClient() = default;
    // Durably enqueues the request; delivery is at-least-once.
    virtual AcceptToken async_invoke(const std::string& function, const Bytes& payload) = 0;
    virtual const std::string& platform_id() const = 0;
};

using DataStorePtr = std::shared_ptr<DataStore>;
using FaasClientPtr = std::shared_ptr<FaasClient>;

class Backend {
  public:
    virtual ~Backend() = default;
    virtual DataStorePtr ds_create(const DsSpec& spec) = 0;
    virtual FaasClientPtr faas_create(const FaaSSpec& spec) = 0;
};

}  // namespace crossflow::shim
