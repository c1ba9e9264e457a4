import asyncio
from concurrent.futures import ThreadPoolExecutor


def call_parallel(functions, max_workers=None):
    """
    Call functions in multiple threads.

    Create a pool of threads, at most as large as the number of functions.
    Functions should accept no parameters (wrap then with partial or lambda).
    Results come back in the order the functions were given, regardless of
    which thread finished first.
    """
    functions = list(functions)
    if not functions:
        return []
    if max_workers is None or max_workers >= len(functions):
        max_workers = len(functions)
    if max_workers <= 1:
        return [function() for function in functions]

    loop = asyncio.new_event_loop()
    executor = ThreadPoolExecutor(max_workers=max_workers)

    try:
        tasks = [
            loop.run_in_executor(executor, function)
            for function in functions
        ]
        result = loop.run_until_complete(asyncio.gather(*tasks))

    finally:
        executor.shutdown(wait=True)
        loop.close()

    return list(result)
