#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "comt/review.hpp"

namespace httplib {
class Server;
}

namespace comt {

inline constexpr const char* kReviewerHeader = "X-Reviewer-Id";

struct ServerOptions {
  std::filesystem::path ui_dir;  // served at "/" when set
};

/// JSON-over-HTTP front end for ReviewService.
///
///   GET  /api/queue?kind=&cursor=&limit=
///   GET  /api/items/{id}
///   POST /api/items/{id}/decision   {"version", "reviewer_id", "decision"}
///   GET  /api/progress
///   POST /api/rounds/advance
///
/// 400 invalid input or unknown reviewer, 404 unknown item, 409 version
/// conflict. The reviewer comes from the X-Reviewer-Id header or the body's
/// `reviewer_id`; when both are present they must agree.
class ReviewServer {
 public:
  explicit ReviewServer(ReviewService& service, ServerOptions options = {});
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  bool bind(const std::string& host, int port);
  /// Returns the chosen port, or -1.
  int bind_to_any_port(const std::string& host);
  /// Blocks until stop().
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  void install_routes();

  ReviewService& service_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace comt
