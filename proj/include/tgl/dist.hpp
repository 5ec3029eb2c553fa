#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tgl/forecast.hpp"
#include "tgl/graph.hpp"

namespace tgl::dist {

// Contiguous, balanced (+-1) snapshot ranges per worker, deterministic.
struct WorkAssignment {
  std::vector<std::pair<int64_t, int64_t>> ranges;  // [begin, end) per worker

  int64_t owner_of(int64_t t) const;
};

WorkAssignment shard_snapshots(int64_t T, int k);

// --- wire messages -----------------------------------------------------------
//
// Frame: u32 length | u8 tag | payload. The payload begins with a u32 CRC32
// of the remaining payload bytes; tensors inside use the checkpoint layout
// (name, rank, dims, f32 little-endian). Every message carries the parameter
// version; stale contributions are rejected.

enum class Tag : uint8_t {
  ParamBroadcast = 1,
  SnapshotEmbeddings = 2,  // worker->coord: H_t; coord->worker: upstream dH_t
  LossTask = 3,
  GradContribution = 4,
  Control = 5,
};

enum class ControlKind : uint8_t {
  StartForward = 1,
  Stop = 2,
  Heartbeat = 3,
  Ack = 4,
  Nack = 5,
  Setup = 6,  // ships a worker's shard (TCP transport)
};

struct Message {
  Tag tag = Tag::Control;
  uint64_t version = 0;
  int64_t t = -1;
  int32_t epoch = -1;
  uint8_t attempt = 0;  // epoch retry counter; stale replies are discarded
  ControlKind control = ControlKind::Ack;
  std::string blob;                            // ParamBroadcast / Setup payload
  Tensor matrix;                               // SnapshotEmbeddings payload
  Tensor z;                                    // LossTask: Z_{t-1}
  std::vector<forecast::NodePair> pos, neg;    // LossTask edge batches
  std::map<std::string, Tensor> grads;         // GradContribution tensors
  double loss = 0.0;                           // GradContribution (loss tasks)
  std::string error;                           // Nack reason
};

std::string encode_message(const Message& m);            // tag byte + payload
Message decode_message(const std::string& bytes);        // validates CRC
std::string encode_frame(const Message& m);              // length-prefixed
// Incremental frame split helper; returns consumed frames.
std::vector<Message> drain_frames(std::string& buffer);

// --- transports ----------------------------------------------------------------

// Coordinator-side handle to one worker.
class WorkerChannel {
 public:
  virtual ~WorkerChannel() = default;
  virtual void send(const Message& m) = 0;
  // Blocking receive; throws TransportError on timeout or closed peer.
  virtual Message recv(int timeout_ms) = 0;
};

// One-shot injected failure, for atomicity tests.
struct FaultPlan {
  int32_t fail_at_epoch = -1;  // -1 disables
  bool triggered = false;
};

// In-process workers backed by threads; returns coordinator-side channels.
// Worker i owns ranges[i] of the snapshot window.
struct InProcRuntime {
  struct Impl;
  std::shared_ptr<Impl> impl;
  std::vector<std::unique_ptr<WorkerChannel>> channels;
};

InProcRuntime make_inproc_workers(const graph::TemporalGraph& tg,
                                  const std::vector<Tensor>& features,
                                  const WorkAssignment& assignment, int64_t in_dim,
                                  int64_t hidden, std::vector<FaultPlan> faults = {});

// TCP transport: length-prefixed frames over a socket.
class TcpChannel : public WorkerChannel {
 public:
  TcpChannel(const std::string& host, int port);
  ~TcpChannel() override;
  void send(const Message& m) override;
  Message recv(int timeout_ms) override;

 private:
  int fd_ = -1;
  std::string buffer_;
  std::vector<Message> pending_;
};

// Blocking worker server: accepts one coordinator, serves messages until
// Stop. Shard data arrives via a Setup control message.
struct WorkerServerOptions {
  int port = 0;          // 0 = ephemeral
  int64_t hidden = 64;
};
struct WorkerServerHandle {
  int port = 0;          // resolved listen port
  struct Impl;
  std::shared_ptr<Impl> impl;
};
// Starts listening immediately; serve() blocks until Stop is received.
WorkerServerHandle start_worker_server(const WorkerServerOptions& opt);
void serve_worker(WorkerServerHandle& handle);

// Shard payload for Setup messages.
std::string encode_shard(const graph::TemporalGraph& tg, const std::vector<Tensor>& features,
                         int64_t begin, int64_t end, int64_t in_dim, int64_t hidden);

// --- coordinator -----------------------------------------------------------------

struct CoordinatorOptions {
  int recv_timeout_ms = 120000;
  int heartbeat_timeout_ms = 10000;
};

// Synchronous snapshot-parallel training: per epoch, broadcast params,
// collect per-snapshot hidden states, run the recurrent scan and projection,
// farm out per-transition losses, BPTT on the coordinator, farm out encoder
// backward, reduce gradients in ascending snapshot order, take one Adam
// step. Results are bitwise identical for every worker count, and identical
// to the k=1 serial path. A failed worker aborts the epoch without applying
// any gradient; the epoch is retried once, then the run fails.
forecast::TrainOutcome coordinate_training(const graph::TemporalGraph& tg,
                                           const forecast::ForecastTrainConfig& cfg);

// Same, over caller-provided channels. When send_setup is set, shards are
// shipped via Setup messages before the first epoch (TCP workers start
// empty); in-process workers are constructed with their shards.
forecast::TrainOutcome coordinate_training_channels(
    const graph::TemporalGraph& tg, const forecast::ForecastTrainConfig& cfg,
    std::vector<std::unique_ptr<WorkerChannel>>& channels, bool send_setup,
    const CoordinatorOptions& opt = {});

// Forward-phase-only run, for scaling measurements: returns wall seconds and
// a checksum of the collected hidden states.
std::pair<double, uint64_t> forward_phase_benchmark(const graph::TemporalGraph& tg,
                                                    const std::vector<Tensor>& features,
                                                    int k, int64_t hidden, uint64_t seed);

}  // namespace tgl::dist
