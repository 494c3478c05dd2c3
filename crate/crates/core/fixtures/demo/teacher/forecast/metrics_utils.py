def smape(actual, forecast):
    total = 0.0
    for a, f in zip(actual, forecast):
        total += 2.0 * abs(f - a) / (abs(a) + abs(f))
    return total / len(actual)
