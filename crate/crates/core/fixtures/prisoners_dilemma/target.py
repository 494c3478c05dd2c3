def strategy(my_history, opp_history):
    """Tit-for-tat: cooperate first, then copy the opponent's last move."""
    if not opp_history:
        return "C"
    return opp_history[-1]


if __name__ == "__main__":
    print(strategy([], []))
