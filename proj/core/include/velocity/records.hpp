#pragma once

#include <string>
#include <string_view>

#include "velocity/domain.hpp"

// Line-delimited JSON codecs for the shared record types. Field names are the
// snake_case member names; timestamps are integer seconds.
namespace velocity {

std::string to_json_line(const Post& post);
std::string to_json_line(const User& user);
std::string to_json_line(const DeletionRecord& record);

// Throw ValidationError on malformed or invalid input.
Post post_from_json(std::string_view line);
User user_from_json(std::string_view line);
DeletionRecord deletion_from_json(std::string_view line);

}  // namespace velocity
