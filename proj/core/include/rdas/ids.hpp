#pragma once

#include <cstdint>
#include <type_traits>

namespace rdas {

enum class EntityId : std::uint32_t {};
enum class RelationId : std::uint32_t {};
enum class TripleId : std::uint32_t {};

template <typename Id>
constexpr std::size_t index_of(Id id) noexcept {
  return static_cast<std::size_t>(static_cast<std::underlying_type_t<Id>>(id));
}

template <typename Id>
constexpr Id make_id(std::size_t index) noexcept {
  return Id{static_cast<std::underlying_type_t<Id>>(index)};
}

}  // namespace rdas
