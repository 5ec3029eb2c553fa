#include "tgl/dist.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "tgl/binio.hpp"
#include "tgl/errors.hpp"
#include "tgl/eval.hpp"
#include "tgl/json_io.hpp"

namespace tgl::dist {

using forecast::NodePair;

int64_t WorkAssignment::owner_of(int64_t t) const {
  for (size_t w = 0; w < ranges.size(); ++w) {
    if (t >= ranges[w].first && t < ranges[w].second) return static_cast<int64_t>(w);
  }
  throw TransportError("no worker owns snapshot " + std::to_string(t));
}

WorkAssignment shard_snapshots(int64_t T, int k) {
  if (k < 1 || T < 0) throw ConfigError("shard_snapshots: need k >= 1, T >= 0");
  WorkAssignment a;
  const int64_t base = T / k;
  const int64_t rem = T % k;
  int64_t begin = 0;
  for (int w = 0; w < k; ++w) {
    const int64_t len = base + (w < rem ? 1 : 0);
    a.ranges.emplace_back(begin, begin + len);
    begin += len;
  }
  return a;
}

// --- message codec -----------------------------------------------------------

namespace {

void put_tensor(std::string& buf, const Tensor& t) {
  binio::put_u32(buf, static_cast<uint32_t>(t.shape.size()));
  for (int64_t d : t.shape) binio::put_u32(buf, static_cast<uint32_t>(d));
  for (float v : t.data) binio::put_f32(buf, v);
}

Tensor read_tensor(binio::Reader& r) {
  const uint32_t rank = r.u32();
  std::vector<int64_t> shape(rank);
  for (auto& d : shape) d = r.u32();
  Tensor t(shape);
  for (auto& v : t.data) v = r.f32();
  return t;
}

void put_pairs(std::string& buf, const std::vector<NodePair>& pairs) {
  binio::put_u32(buf, static_cast<uint32_t>(pairs.size()));
  for (const auto& p : pairs) {
    binio::put_u32(buf, static_cast<uint32_t>(p.u));
    binio::put_u32(buf, static_cast<uint32_t>(p.v));
  }
}

std::vector<NodePair> read_pairs(binio::Reader& r) {
  std::vector<NodePair> pairs(r.u32());
  for (auto& p : pairs) {
    p.u = static_cast<int32_t>(r.u32());
    p.v = static_cast<int32_t>(r.u32());
  }
  return pairs;
}

}  // namespace

std::string encode_message(const Message& m) {
  std::string body;
  binio::put_u64(body, m.version);
  binio::put_i64(body, m.t);
  binio::put_u32(body, static_cast<uint32_t>(m.epoch));
  binio::put_u8(body, m.attempt);
  binio::put_u8(body, static_cast<uint8_t>(m.control));
  switch (m.tag) {
    case Tag::ParamBroadcast:
      binio::put_bytes(body, m.blob);
      break;
    case Tag::SnapshotEmbeddings:
      put_tensor(body, m.matrix);
      break;
    case Tag::LossTask:
      put_tensor(body, m.z);
      put_pairs(body, m.pos);
      put_pairs(body, m.neg);
      break;
    case Tag::GradContribution:
      binio::put_f64(body, m.loss);
      binio::put_u32(body, static_cast<uint32_t>(m.grads.size()));
      for (const auto& [name, tensor] : m.grads) {
        binio::put_bytes(body, name);
        put_tensor(body, tensor);
      }
      break;
    case Tag::Control:
      binio::put_bytes(body, m.blob);
      binio::put_bytes(body, m.error);
      break;
  }
  std::string out;
  binio::put_u8(out, static_cast<uint8_t>(m.tag));
  binio::put_u32(out, binio::crc32(body));
  out += body;
  return out;
}

Message decode_message(const std::string& bytes) {
  binio::Reader header(bytes);
  Message m;
  m.tag = static_cast<Tag>(header.u8());
  const uint32_t crc = header.u32();
  const std::string body = header.raw(header.remaining());
  if (binio::crc32(body) != crc) throw TransportError("message checksum mismatch");

  binio::Reader r(body);
  m.version = r.u64();
  m.t = r.i64();
  m.epoch = static_cast<int32_t>(r.u32());
  m.attempt = r.u8();
  m.control = static_cast<ControlKind>(r.u8());
  switch (m.tag) {
    case Tag::ParamBroadcast:
      m.blob = r.bytes();
      break;
    case Tag::SnapshotEmbeddings:
      m.matrix = read_tensor(r);
      break;
    case Tag::LossTask:
      m.z = read_tensor(r);
      m.pos = read_pairs(r);
      m.neg = read_pairs(r);
      break;
    case Tag::GradContribution: {
      m.loss = r.f64();
      const uint32_t count = r.u32();
      for (uint32_t i = 0; i < count; ++i) {
        std::string name = r.bytes();
        m.grads.emplace(std::move(name), read_tensor(r));
      }
      break;
    }
    case Tag::Control:
      m.blob = r.bytes();
      m.error = r.bytes();
      break;
  }
  return m;
}

std::string encode_frame(const Message& m) {
  const std::string payload = encode_message(m);
  std::string out;
  binio::put_u32(out, static_cast<uint32_t>(payload.size()));
  out += payload;
  return out;
}

std::vector<Message> drain_frames(std::string& buffer) {
  std::vector<Message> out;
  size_t pos = 0;
  while (buffer.size() - pos >= 4) {
    binio::Reader r(buffer.data() + pos, buffer.size() - pos);
    const uint32_t len = r.u32();
    if (buffer.size() - pos - 4 < len) break;
    out.push_back(decode_message(buffer.substr(pos + 4, len)));
    pos += 4 + len;
  }
  buffer.erase(0, pos);
  return out;
}

// --- worker ---------------------------------------------------------------------

namespace {

struct ShardData {
  std::vector<int64_t> ts;
  std::unordered_map<int64_t, graph::Adjacency> adj;
  std::unordered_map<int64_t, Tensor> feats;
  int64_t in_dim = 0;
  int64_t hidden = 64;
};

std::string encode_adjacency(const graph::Adjacency& adj) {
  std::string buf;
  binio::put_u32(buf, static_cast<uint32_t>(adj.node_count()));
  for (int32_t v = 0; v < adj.node_count(); ++v) {
    binio::put_u32(buf, static_cast<uint32_t>(adj.out[v].size()));
    for (auto& [nb, w] : adj.out[v]) {
      binio::put_u32(buf, static_cast<uint32_t>(nb));
      binio::put_u32(buf, w);
    }
  }
  return buf;
}

graph::Adjacency decode_adjacency(binio::Reader& r) {
  const uint32_t n = r.u32();
  std::vector<std::pair<int32_t, int32_t>> pairs;
  for (uint32_t v = 0; v < n; ++v) {
    const uint32_t deg = r.u32();
    for (uint32_t e = 0; e < deg; ++e) {
      const int32_t nb = static_cast<int32_t>(r.u32());
      const uint32_t w = r.u32();
      for (uint32_t i = 0; i < w; ++i) pairs.emplace_back(static_cast<int32_t>(v), nb);
    }
  }
  return graph::Adjacency::from_pairs(static_cast<int32_t>(n), std::move(pairs));
}

class Worker {
 public:
  Worker() = default;
  explicit Worker(ShardData shard, FaultPlan fault = {})
      : shard_(std::move(shard)), fault_(fault) {
    init_encoder();
  }

  void load_shard_payload(const std::string& payload) {
    binio::Reader r(payload);
    shard_.in_dim = r.i64();
    shard_.hidden = r.i64();
    const uint32_t count = r.u32();
    for (uint32_t i = 0; i < count; ++i) {
      const int64_t t = r.i64();
      shard_.ts.push_back(t);
      shard_.adj.emplace(t, decode_adjacency(r));
      shard_.feats.emplace(t, read_tensor(r));
    }
    std::sort(shard_.ts.begin(), shard_.ts.end());
    init_encoder();
  }

  // Handles one message; replies are produced atomically (a thrown error
  // yields no partial output).
  std::vector<Message> handle(const Message& in, bool* stop) {
    std::vector<Message> replies;
    auto stamp = [&](Message m) {
      m.epoch = in.epoch;
      m.attempt = in.attempt;
      if (m.version == 0) m.version = version_;
      return m;
    };
    auto ack = [&]() {
      Message m;
      m.tag = Tag::Control;
      m.control = ControlKind::Ack;
      return stamp(std::move(m));
    };
    auto nack = [&](const std::string& why) {
      Message m;
      m.tag = Tag::Control;
      m.control = ControlKind::Nack;
      m.error = why;
      return stamp(std::move(m));
    };

    switch (in.tag) {
      case Tag::ParamBroadcast: {
        nn::Checkpoint ckpt = nn::parse_checkpoint(in.blob);
        nn::restore_parameters(ckpt, encoder_.all());
        version_ = in.version;
        caches_.clear();
        replies.push_back(ack());
        break;
      }
      case Tag::Control:
        switch (in.control) {
          case ControlKind::StartForward: {
            if (fault_.fail_at_epoch >= 0 && in.epoch == fault_.fail_at_epoch &&
                !fault_.triggered) {
              fault_.triggered = true;
              throw TransportError("injected worker fault at epoch " +
                                   std::to_string(in.epoch));
            }
            caches_.clear();
            for (int64_t t : shard_.ts) {
              auto& cache = caches_[t];
              Tensor H = sage::sage_hidden_forward(shard_.adj.at(t), shard_.feats.at(t),
                                                   encoder_, &cache);
              Message m;
              m.tag = Tag::SnapshotEmbeddings;
              m.t = t;
              m.matrix = std::move(H);
              replies.push_back(stamp(std::move(m)));
            }
            replies.push_back(ack());  // end of forward phase, even when idle
            break;
          }
          case ControlKind::Heartbeat:
            replies.push_back(ack());
            break;
          case ControlKind::Setup:
            load_shard_payload(in.blob);
            replies.push_back(ack());
            break;
          case ControlKind::Stop:
            if (stop) *stop = true;
            break;
          default:
            replies.push_back(nack("unexpected control message"));
        }
        break;
      case Tag::LossTask: {
        if (in.version != version_) {
          replies.push_back(nack("stale parameter version"));
          break;
        }
        forecast::TransitionBatch batch{in.pos, in.neg};
        forecast::TransitionLoss tl = forecast::transition_loss(in.z, batch);
        Message m;
        m.tag = Tag::GradContribution;
        m.t = in.t;
        m.loss = tl.loss;
        m.grads.emplace("dZ", std::move(tl.gZ));
        replies.push_back(stamp(std::move(m)));
        break;
      }
      case Tag::SnapshotEmbeddings: {  // upstream gradient wrt our hidden states
        if (in.version != version_) {
          replies.push_back(nack("stale parameter version"));
          break;
        }
        auto it = caches_.find(in.t);
        if (it == caches_.end()) {
          replies.push_back(nack("no cached activations for snapshot " +
                                 std::to_string(in.t)));
          break;
        }
        for (auto* p : encoder_.all()) p->zero_grad();
        sage::sage_hidden_backward(shard_.adj.at(in.t), it->second, encoder_, in.matrix,
                                   nullptr);
        Message m;
        m.tag = Tag::GradContribution;
        m.t = in.t;
        for (auto* p : encoder_.all()) m.grads.emplace(p->name, p->grad);
        replies.push_back(stamp(std::move(m)));
        break;
      }
      default:
        replies.push_back(nack("unexpected message tag"));
    }
    return replies;
  }

 private:
  void init_encoder() {
    if (shard_.in_dim > 0) {
      Rng rng(0);  // shapes only; values arrive via ParamBroadcast
      encoder_ = sage::SageEncoder::init("enc", shard_.in_dim, shard_.hidden, rng);
    }
  }

  ShardData shard_;
  sage::SageEncoder encoder_;
  uint64_t version_ = 0;
  std::unordered_map<int64_t, sage::SageCacheT<float>> caches_;
  FaultPlan fault_;
};

// --- in-process transport ---------------------------------------------------------

class BlockingQueue {
 public:
  void push(Message m) {
    {
      std::lock_guard<std::mutex> lk(mu_);
      q_.push_back(std::move(m));
    }
    cv_.notify_one();
  }

  Message pop(int timeout_ms) {
    std::unique_lock<std::mutex> lk(mu_);
    if (timeout_ms < 0) {
      cv_.wait(lk, [this] { return !q_.empty(); });
    } else {
      if (!cv_.wait_for(lk, std::chrono::milliseconds(timeout_ms),
                        [this] { return !q_.empty(); }))
        throw TransportError("worker receive timeout");
    }
    Message m = std::move(q_.front());
    q_.pop_front();
    return m;
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Message> q_;
};

class InProcChannel : public WorkerChannel {
 public:
  InProcChannel(std::shared_ptr<BlockingQueue> to_worker,
                std::shared_ptr<BlockingQueue> to_coord)
      : to_worker_(std::move(to_worker)), to_coord_(std::move(to_coord)) {}

  void send(const Message& m) override { to_worker_->push(m); }
  Message recv(int timeout_ms) override { return to_coord_->pop(timeout_ms); }

 private:
  std::shared_ptr<BlockingQueue> to_worker_, to_coord_;
};

}  // namespace

struct InProcRuntime::Impl {
  std::vector<std::shared_ptr<BlockingQueue>> to_worker, to_coord;
  std::vector<std::thread> threads;

  ~Impl() {
    for (auto& q : to_worker) {
      Message stop;
      stop.tag = Tag::Control;
      stop.control = ControlKind::Stop;
      q->push(stop);
    }
    for (auto& th : threads) {
      if (th.joinable()) th.join();
    }
  }
};

InProcRuntime make_inproc_workers(const graph::TemporalGraph& tg,
                                  const std::vector<Tensor>& features,
                                  const WorkAssignment& assignment, int64_t in_dim,
                                  int64_t hidden, std::vector<FaultPlan> faults) {
  InProcRuntime rt;
  rt.impl = std::make_shared<InProcRuntime::Impl>();
  for (size_t w = 0; w < assignment.ranges.size(); ++w) {
    ShardData shard;
    shard.in_dim = in_dim;
    shard.hidden = hidden;
    for (int64_t t = assignment.ranges[w].first; t < assignment.ranges[w].second; ++t) {
      shard.ts.push_back(t);
      shard.adj.emplace(t, tg.snapshots[t].adj);
      shard.feats.emplace(t, features[t]);
    }
    FaultPlan fault = w < faults.size() ? faults[w] : FaultPlan{};

    auto to_worker = std::make_shared<BlockingQueue>();
    auto to_coord = std::make_shared<BlockingQueue>();
    rt.impl->to_worker.push_back(to_worker);
    rt.impl->to_coord.push_back(to_coord);
    rt.channels.push_back(std::make_unique<InProcChannel>(to_worker, to_coord));

    rt.impl->threads.emplace_back([shard = std::move(shard), fault, to_worker,
                                   to_coord]() mutable {
      Worker worker(std::move(shard), fault);
      bool stop = false;
      while (!stop) {
        Message in = to_worker->pop(-1);
        try {
          for (auto& reply : worker.handle(in, &stop)) to_coord->push(std::move(reply));
        } catch (const std::exception& e) {
          Message nack;
          nack.tag = Tag::Control;
          nack.control = ControlKind::Nack;
          nack.epoch = in.epoch;
          nack.attempt = in.attempt;
          nack.error = e.what();
          to_coord->push(std::move(nack));
        }
      }
    });
  }
  return rt;
}

// --- TCP transport -----------------------------------------------------------------

namespace {

void send_all(int fd, const std::string& bytes) {
  size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) throw TransportError("socket send failed");
    sent += static_cast<size_t>(n);
  }
}

}  // namespace

TcpChannel::TcpChannel(const std::string& host, int port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw TransportError("cannot create socket");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw TransportError("bad worker address: " + host);
  }
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd_);
    throw TransportError("cannot connect to worker " + host + ":" + std::to_string(port));
  }
  int flag = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &flag, sizeof(flag));
}

TcpChannel::~TcpChannel() {
  if (fd_ >= 0) ::close(fd_);
}

void TcpChannel::send(const Message& m) { send_all(fd_, encode_frame(m)); }

Message TcpChannel::recv(int timeout_ms) {
  for (;;) {
    if (!pending_.empty()) {
      Message m = std::move(pending_.front());
      pending_.erase(pending_.begin());
      return m;
    }
    pollfd pfd{fd_, POLLIN, 0};
    const int pr = ::poll(&pfd, 1, timeout_ms);
    if (pr == 0) throw TransportError("worker receive timeout");
    if (pr < 0) throw TransportError("poll failed");
    char chunk[65536];
    const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
    if (n <= 0) throw TransportError("worker connection closed");
    buffer_.append(chunk, static_cast<size_t>(n));
    for (auto& m : drain_frames(buffer_)) pending_.push_back(std::move(m));
  }
}

struct WorkerServerHandle::Impl {
  int listen_fd = -1;
  ~Impl() {
    if (listen_fd >= 0) ::close(listen_fd);
  }
};

WorkerServerHandle start_worker_server(const WorkerServerOptions& opt) {
  WorkerServerHandle handle;
  handle.impl = std::make_shared<WorkerServerHandle::Impl>();
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw TransportError("cannot create listen socket");
  int reuse = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &reuse, sizeof(reuse));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<uint16_t>(opt.port));
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    throw TransportError("cannot bind worker port " + std::to_string(opt.port));
  }
  if (::listen(fd, 1) != 0) {
    ::close(fd);
    throw TransportError("cannot listen on worker port");
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  handle.port = ntohs(addr.sin_port);
  handle.impl->listen_fd = fd;
  return handle;
}

void serve_worker(WorkerServerHandle& handle) {
  const int client = ::accept(handle.impl->listen_fd, nullptr, nullptr);
  if (client < 0) throw TransportError("accept failed");
  Worker worker;
  std::string buffer;
  bool stop = false;
  try {
    while (!stop) {
      char chunk[65536];
      const ssize_t n = ::recv(client, chunk, sizeof(chunk), 0);
      if (n <= 0) break;
      buffer.append(chunk, static_cast<size_t>(n));
      for (auto& in : drain_frames(buffer)) {
        try {
          for (auto& reply : worker.handle(in, &stop)) send_all(client, encode_frame(reply));
        } catch (const std::exception& e) {
          Message nack;
          nack.tag = Tag::Control;
          nack.control = ControlKind::Nack;
          nack.epoch = in.epoch;
          nack.attempt = in.attempt;
          nack.error = e.what();
          send_all(client, encode_frame(nack));
        }
        if (stop) break;
      }
    }
  } catch (const TransportError&) {
    // peer went away; fall through to close
  }
  ::close(client);
}

std::string encode_shard(const graph::TemporalGraph& tg, const std::vector<Tensor>& features,
                         int64_t begin, int64_t end, int64_t in_dim, int64_t hidden) {
  std::string buf;
  binio::put_i64(buf, in_dim);
  binio::put_i64(buf, hidden);
  binio::put_u32(buf, static_cast<uint32_t>(end - begin));
  for (int64_t t = begin; t < end; ++t) {
    binio::put_i64(buf, t);
    buf += encode_adjacency(tg.snapshots[t].adj);
    put_tensor(buf, features[t]);
  }
  return buf;
}

// --- coordinator -------------------------------------------------------------------

namespace {

struct EpochMetrics {
  double train_loss = 0.0;
  double val_ap = 0.0;
};

class Coordinator {
 public:
  Coordinator(const graph::TemporalGraph& tg, const forecast::ForecastTrainConfig& cfg,
              std::vector<std::unique_ptr<WorkerChannel>>& channels,
              const CoordinatorOptions& opt)
      : tg_(tg), cfg_(cfg), channels_(channels), opt_(opt) {
    split_ = forecast::make_split(tg.snapshot_count());
    scan_end_ = split_.val_end;
    features_ = forecast::forecast_features(tg, split_.train_end);
    assignment_ = shard_snapshots(scan_end_, static_cast<int>(channels_.size()));

    unique_edges_.resize(scan_end_ + 1);
    for (int64_t t = 1; t <= scan_end_ && t < tg.snapshot_count(); ++t)
      unique_edges_[t] = forecast::unique_undirected_edges(tg.snapshots[t].adj);

    for (int64_t tn = 1; tn < split_.train_end; ++tn) {
      if (!unique_edges_[tn].empty()) train_targets_.push_back(tn);
    }
    for (int64_t tn = split_.train_end; tn < split_.val_end; ++tn) {
      if (!unique_edges_[tn].empty()) val_targets_.push_back(tn);
    }
    if (train_targets_.empty()) throw TrainingError("no non-empty training transitions");
    if (val_targets_.empty()) throw TrainingError("no non-empty validation transitions");

    Rng rng = Rng::for_stream(cfg.seed, "forecast.init");
    params_ = forecast::ForecastParams::init(features_.front().cols(), cfg.hidden,
                                             cfg.zdim, rng);
    all_params_ = params_.all();
    for (auto* p : params_.encoder.all()) encoder_by_name_[p->name] = p;
  }

  void send_setup() {
    for (size_t w = 0; w < channels_.size(); ++w) {
      Message m;
      m.tag = Tag::Control;
      m.control = ControlKind::Setup;
      m.blob = encode_shard(tg_, features_, assignment_.ranges[w].first,
                            assignment_.ranges[w].second, features_.front().cols(),
                            cfg_.hidden);
      channels_[w]->send(m);
    }
    for (auto& ch : channels_) expect_ack(*ch, -1, 0);
  }

  forecast::TrainOutcome train() {
    forecast::TrainOutcome out;
    nn::AdamOptimizer adam({cfg_.lr, 0.9, 0.999, 1e-8});
    double best = -1.0;
    std::vector<Tensor> best_values;

    int epoch = 0;
    for (; epoch < cfg_.max_epochs; ++epoch) {
      EpochMetrics metrics;
      try {
        metrics = run_epoch(epoch, 0);
      } catch (const TransportError&) {
        metrics = run_epoch(epoch, 1);  // one retry, then fail for real
      }

      if (metrics.val_ap > best) {
        best = metrics.val_ap;
        out.best_epoch = epoch;
        best_values.clear();
        for (auto* p : all_params_) best_values.push_back(p->value);
      }
      adam.step(all_params_);
      ++version_;
      out.log.push_back({epoch, metrics.train_loss, metrics.val_ap});
      if (epoch - out.best_epoch >= cfg_.patience) {
        ++epoch;
        break;
      }
    }
    out.epochs_run = epoch;
    out.best_val_ap = best;
    for (size_t i = 0; i < all_params_.size(); ++i) all_params_[i]->value = best_values[i];
    out.params = params_;
    stop_workers();
    return out;
  }

  void stop_workers() {
    Message stop;
    stop.tag = Tag::Control;
    stop.control = ControlKind::Stop;
    for (auto& ch : channels_) ch->send(stop);
  }

 private:
  void broadcast_params(int epoch, uint8_t attempt) {
    std::vector<const nn::Parameter*> enc;
    for (auto* p : params_.encoder.all()) enc.push_back(p);
    Message m;
    m.tag = Tag::ParamBroadcast;
    m.version = version_;
    m.epoch = epoch;
    m.attempt = attempt;
    m.blob = nn::serialize_checkpoint(enc);
    for (auto& ch : channels_) ch->send(m);
    for (auto& ch : channels_) expect_ack(*ch, epoch, attempt);
  }

  bool stale(const Message& m, int epoch, uint8_t attempt) const {
    return m.epoch != epoch || m.attempt != attempt;
  }

  void expect_ack(WorkerChannel& ch, int epoch, uint8_t attempt) {
    for (;;) {
      Message m = ch.recv(opt_.recv_timeout_ms);
      if (stale(m, epoch, attempt)) continue;
      if (m.tag == Tag::Control && m.control == ControlKind::Ack) return;
      if (m.tag == Tag::Control && m.control == ControlKind::Nack)
        throw TransportError("worker NACK: " + m.error);
      // anything else out of order is a protocol failure for this attempt
      throw TransportError("unexpected message while awaiting ack");
    }
  }

  std::vector<Tensor> collect_forward(int epoch, uint8_t attempt) {
    Message start;
    start.tag = Tag::Control;
    start.control = ControlKind::StartForward;
    start.version = version_;
    start.epoch = epoch;
    start.attempt = attempt;
    for (auto& ch : channels_) ch->send(start);

    std::vector<Tensor> H(scan_end_);
    std::vector<bool> seen(scan_end_, false);
    for (auto& ch : channels_) {
      for (;;) {
        Message m = ch->recv(opt_.recv_timeout_ms);
        if (stale(m, epoch, attempt)) continue;
        if (m.tag == Tag::Control && m.control == ControlKind::Ack) break;
        if (m.tag == Tag::Control && m.control == ControlKind::Nack)
          throw TransportError("worker NACK during forward: " + m.error);
        if (m.tag != Tag::SnapshotEmbeddings || m.version != version_)
          throw TransportError("unexpected forward-phase message");
        if (m.t < 0 || m.t >= scan_end_ || seen[m.t])
          throw TransportError("bad snapshot index in forward phase");
        H[m.t] = std::move(m.matrix);  // buffered by t: arrival order is irrelevant
        seen[m.t] = true;
      }
    }
    for (int64_t t = 0; t < scan_end_; ++t) {
      if (!seen[t]) throw TransportError("missing snapshot " + std::to_string(t));
    }
    return H;
  }

  EpochMetrics run_epoch(int epoch, uint8_t attempt) {
    for (auto* p : all_params_) p->zero_grad();
    broadcast_params(epoch, attempt);
    std::vector<Tensor> H = collect_forward(epoch, attempt);

    forecast::ScanCacheT<float> cache;
    std::vector<Tensor> Z =
        forecast::temporal_project_forward(H, params_, cfg_.variant, &cache);

    // per-transition loss tasks, one per non-empty training transition
    const double inv_trans = 1.0 / static_cast<double>(train_targets_.size());
    std::vector<int64_t> task_count(channels_.size(), 0);
    for (int64_t tn : train_targets_) {
      Rng rng = forecast::derive_rng(cfg_.seed, "train-neg", epoch, tn);
      Message task;
      task.tag = Tag::LossTask;
      task.version = version_;
      task.epoch = epoch;
      task.attempt = attempt;
      task.t = tn;
      task.z = Z[tn - 1];
      task.pos = unique_edges_[tn];
      task.neg = forecast::sample_negatives(
          task.pos, tg_.node_count(), static_cast<int64_t>(task.pos.size()), rng);
      const int64_t w = assignment_.owner_of(tn);
      channels_[w]->send(task);
      ++task_count[w];
    }

    std::map<int64_t, Tensor> dZ;
    std::map<int64_t, double> losses;
    for (size_t w = 0; w < channels_.size(); ++w) {
      for (int64_t i = 0; i < task_count[w]; ++i) {
        Message m = recv_grad(*channels_[w], epoch, attempt);
        dZ[m.t] = std::move(m.grads.at("dZ"));
        losses[m.t] = m.loss;
      }
    }

    EpochMetrics metrics;
    for (int64_t tn : train_targets_) metrics.train_loss += losses.at(tn);
    metrics.train_loss *= inv_trans;

    std::vector<Tensor> gZ(scan_end_);
    for (int64_t tn : train_targets_) {
      Tensor g = std::move(dZ.at(tn));
      scale_inplace(g, static_cast<float>(inv_trans));
      gZ[tn - 1] = std::move(g);
    }
    std::vector<Tensor> gH =
        forecast::temporal_project_backward(cache, params_, gZ, cfg_.variant);

    // upstream-gradient tasks; beyond the last loss-bearing snapshot gH is
    // exactly zero, so those are skipped
    const int64_t last_loss_t = train_targets_.back() - 1;
    std::vector<int64_t> upstream;
    if (cfg_.variant == forecast::Variant::Recurrent) {
      for (int64_t t = 0; t <= last_loss_t; ++t) upstream.push_back(t);
    } else {
      for (int64_t tn : train_targets_) upstream.push_back(tn - 1);
    }
    std::fill(task_count.begin(), task_count.end(), 0);
    for (int64_t t : upstream) {
      Message m;
      m.tag = Tag::SnapshotEmbeddings;
      m.version = version_;
      m.epoch = epoch;
      m.attempt = attempt;
      m.t = t;
      m.matrix = gH[t];
      const int64_t w = assignment_.owner_of(t);
      channels_[w]->send(m);
      ++task_count[w];
    }
    std::map<int64_t, std::map<std::string, Tensor>> enc_grads;
    for (size_t w = 0; w < channels_.size(); ++w) {
      for (int64_t i = 0; i < task_count[w]; ++i) {
        Message m = recv_grad(*channels_[w], epoch, attempt);
        enc_grads[m.t] = std::move(m.grads);
      }
    }
    // fixed-order reduction: ascending snapshot index
    for (auto& [t, grads] : enc_grads) {
      for (auto& [name, g] : grads) {
        auto it = encoder_by_name_.find(name);
        if (it == encoder_by_name_.end())
          throw TransportError("unknown gradient tensor: " + name);
        axpy(it->second->grad, 1.0f, g);
      }
    }

    // validation AP on this epoch's embeddings (pre-update parameters)
    std::vector<double> aps;
    for (int64_t tn : val_targets_) {
      Rng rng = forecast::derive_rng(cfg_.eval_seed, "val-neg", 0, tn);
      forecast::TransitionBatch batch;
      batch.pos = unique_edges_[tn];
      batch.neg = forecast::sample_negatives(
          batch.pos, tg_.node_count(), static_cast<int64_t>(batch.pos.size()), rng);
      std::vector<double> scores;
      std::vector<int> labels;
      forecast::score_batch(Z[tn - 1], batch, scores, labels);
      aps.push_back(eval::ranking_metrics(scores, labels).ap);
    }
    double ap = 0.0;
    for (double v : aps) ap += v;
    metrics.val_ap = ap / static_cast<double>(aps.size());
    return metrics;
  }

  Message recv_grad(WorkerChannel& ch, int epoch, uint8_t attempt) {
    for (;;) {
      Message m = ch.recv(opt_.recv_timeout_ms);
      if (stale(m, epoch, attempt)) continue;
      if (m.tag == Tag::Control && m.control == ControlKind::Nack)
        throw TransportError("worker NACK: " + m.error);
      if (m.tag != Tag::GradContribution || m.version != version_)
        throw TransportError("unexpected message while awaiting gradients");
      return m;
    }
  }

  const graph::TemporalGraph& tg_;
  const forecast::ForecastTrainConfig& cfg_;
  std::vector<std::unique_ptr<WorkerChannel>>& channels_;
  CoordinatorOptions opt_;
  forecast::SnapshotSplit split_;
  int64_t scan_end_ = 0;
  std::vector<Tensor> features_;
  WorkAssignment assignment_;
  std::vector<std::vector<NodePair>> unique_edges_;
  std::vector<int64_t> train_targets_, val_targets_;
  forecast::ForecastParams params_;
  std::vector<nn::Parameter*> all_params_;
  std::unordered_map<std::string, nn::Parameter*> encoder_by_name_;
  uint64_t version_ = 1;
};

}  // namespace

forecast::TrainOutcome coordinate_training_channels(
    const graph::TemporalGraph& tg, const forecast::ForecastTrainConfig& cfg,
    std::vector<std::unique_ptr<WorkerChannel>>& channels, bool send_setup,
    const CoordinatorOptions& opt) {
  if (channels.empty()) throw ConfigError("coordinate_training: need at least one worker");
  Coordinator coord(tg, cfg, channels, opt);
  if (send_setup) coord.send_setup();
  return coord.train();
}

forecast::TrainOutcome coordinate_training(const graph::TemporalGraph& tg,
                                           const forecast::ForecastTrainConfig& cfg) {
  const int k = std::max(1, cfg.workers);
  const auto split = forecast::make_split(tg.snapshot_count());
  const auto features = forecast::forecast_features(tg, split.train_end);
  const auto assignment = shard_snapshots(split.val_end, k);
  InProcRuntime rt = make_inproc_workers(tg, features, assignment, features.front().cols(),
                                         cfg.hidden);
  return coordinate_training_channels(tg, cfg, rt.channels, /*send_setup=*/false);
}

std::pair<double, uint64_t> forward_phase_benchmark(const graph::TemporalGraph& tg,
                                                    const std::vector<Tensor>& features,
                                                    int k, int64_t hidden, uint64_t seed) {
  const int64_t T = std::min<int64_t>(static_cast<int64_t>(features.size()),
                                      tg.snapshot_count());
  const auto assignment = shard_snapshots(T, k);
  InProcRuntime rt =
      make_inproc_workers(tg, features, assignment, features.front().cols(), hidden);

  Rng rng = Rng::for_stream(seed, "forecast.init");
  auto params =
      forecast::ForecastParams::init(features.front().cols(), hidden, 32, rng);
  std::vector<const nn::Parameter*> enc;
  for (auto* p : params.encoder.all()) enc.push_back(p);

  Message bc;
  bc.tag = Tag::ParamBroadcast;
  bc.version = 1;
  bc.epoch = 0;
  bc.blob = nn::serialize_checkpoint(enc);
  for (auto& ch : rt.channels) ch->send(bc);
  for (auto& ch : rt.channels) {
    Message m = ch->recv(60000);
    if (m.tag != Tag::Control || m.control != ControlKind::Ack)
      throw TransportError("worker failed to ack broadcast");
  }

  const auto t0 = std::chrono::steady_clock::now();
  Message start;
  start.tag = Tag::Control;
  start.control = ControlKind::StartForward;
  start.version = 1;
  start.epoch = 0;
  for (auto& ch : rt.channels) ch->send(start);

  std::vector<Tensor> H(T);
  for (auto& ch : rt.channels) {
    for (;;) {
      Message m = ch->recv(60000);
      if (m.tag == Tag::Control && m.control == ControlKind::Ack) break;
      if (m.tag == Tag::Control && m.control == ControlKind::Nack)
        throw TransportError("worker NACK: " + m.error);
      if (m.tag != Tag::SnapshotEmbeddings) throw TransportError("unexpected message");
      H[m.t] = std::move(m.matrix);
    }
  }
  const auto t1 = std::chrono::steady_clock::now();

  std::string bytes;
  for (const auto& h : H) {
    for (float v : h.data) binio::put_f32(bytes, v);
  }
  return {std::chrono::duration<double>(t1 - t0).count(), fnv1a64(bytes)};
}

}  // namespace tgl::dist
